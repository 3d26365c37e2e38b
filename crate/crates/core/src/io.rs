//! Raw dumps of sampled fields and connections: one JSON header line, then the
//! node-major data as little-endian `f64`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::connection::{ConnectionForm, ConnectionKind, Field, FieldKind};
use crate::error::{Error, Result};
use crate::grid::TensorGrid;

pub const FORMAT_NAME: &str = "gaugetrace-dump";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DumpKind {
    /// `m` values per node.
    Field,
    /// `d` row-major `m × m` blocks per node.
    Connection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub kind: DumpKind,
    pub dim_domain: usize,
    pub dim_fiber: usize,
    pub axes: Vec<Vec<f64>>,
}

impl DumpHeader {
    fn values_per_node(&self) -> usize {
        match self.kind {
            DumpKind::Field => self.dim_fiber,
            DumpKind::Connection => self.dim_domain * self.dim_fiber * self.dim_fiber,
        }
    }
}

fn write_dump<W: Write>(mut w: W, header: &DumpHeader, data: &[f64]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_dump<R: BufRead>(mut r: R, kind: DumpKind) -> Result<(DumpHeader, TensorGrid, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dump {} v{}", header.format, header.version)));
    }
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {kind:?} dump, found {:?}", header.kind)));
    }
    if header.axes.len() != header.dim_domain {
        return Err(Error::Format("axis count does not match the domain dimension".into()));
    }
    let grid = TensorGrid::new(header.axes.clone())?;
    let count = grid.len() * header.values_per_node();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * count {
        return Err(Error::Format(format!("expected {} data bytes, found {}", 8 * count, bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, grid, data))
}

fn header(kind: DumpKind, grid: &TensorGrid, m: usize) -> DumpHeader {
    DumpHeader {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        kind,
        dim_domain: grid.dim(),
        dim_fiber: m,
        axes: grid.axes().to_vec(),
    }
}

/// Node data of a field on a tensor grid.
pub fn write_field_data<W: Write>(w: W, grid: &TensorGrid, m: usize, data: &[f64]) -> Result<()> {
    if data.len() != grid.len() * m {
        return Err(Error::DimensionMismatch {
            expected: grid.len() * m,
            got: data.len(),
        });
    }
    write_dump(w, &header(DumpKind::Field, grid, m), data)
}

/// Dumps a sampled field.
pub fn write_field<W: Write>(w: W, field: &Field) -> Result<()> {
    match field.kind() {
        FieldKind::Sampled(s) => write_field_data(w, s.grid(), field.dim_fiber(), s.data()),
        _ => Err(Error::invalid("only sampled fields can be dumped; sample the field first")),
    }
}

/// Reads a field dump as a raw sampled field.
pub fn read_field<R: Read>(r: R) -> Result<Field> {
    let (h, grid, data) = read_dump(BufReader::new(r), DumpKind::Field)?;
    Field::sampled(grid, h.dim_fiber, data)
}

pub fn write_connection<W: Write>(w: W, gamma: &ConnectionForm) -> Result<()> {
    match gamma.kind() {
        ConnectionKind::Sampled(s) => {
            write_dump(w, &header(DumpKind::Connection, s.grid(), gamma.dim_fiber()), s.data())
        }
        _ => Err(Error::invalid("only sampled connections can be dumped; sample the connection first")),
    }
}

pub fn read_connection<R: Read>(r: R) -> Result<ConnectionForm> {
    let (h, grid, data) = read_dump(BufReader::new(r), DumpKind::Connection)?;
    ConnectionForm::sampled(grid, h.dim_fiber, data)
}

pub fn save_field(path: &Path, field: &Field) -> Result<()> {
    write_field(BufWriter::new(std::fs::File::create(path)?), field)
}

pub fn load_field(path: &Path) -> Result<Field> {
    read_field(std::fs::File::open(path)?)
}

pub fn save_connection(path: &Path, gamma: &ConnectionForm) -> Result<()> {
    write_connection(BufWriter::new(std::fs::File::create(path)?), gamma)
}

pub fn load_connection(path: &Path) -> Result<ConnectionForm> {
    read_connection(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::VectorPotential;
    use crate::lie::Vector;

    fn grid() -> TensorGrid {
        TensorGrid::new(vec![vec![-1.0, 0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]]).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let g = grid();
        let data: Vec<f64> = (0..g.len() * 2).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = Field::sampled(g.clone(), 2, data.clone()).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        match back.kind() {
            FieldKind::Sampled(s) => {
                assert_eq!(s.grid(), &g);
                assert!(s.data().iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            _ => panic!("expected sampled field"),
        }
    }

    #[test]
    fn connection_round_trip() {
        let src = ConnectionForm::abelian(VectorPotential::flux(2, 0.8)).unwrap();
        let sampled = ConnectionForm::sampled_from(&src, grid()).unwrap();
        let mut buf = Vec::new();
        write_connection(&mut buf, &sampled).unwrap();
        let back = read_connection(buf.as_slice()).unwrap();
        let x = Vector::from_vec(vec![0.3, 0.4]);
        let v = Vector::from_vec(vec![1.0, -0.5]);
        assert_eq!(back.eval(&x, &v).unwrap(), sampled.eval(&x, &v).unwrap());
    }

    #[test]
    fn truncated_dump_rejected() {
        let g = grid();
        let mut buf = Vec::new();
        write_field_data(&mut buf, &g, 1, &vec![0.0; g.len()]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_field(buf.as_slice()), Err(Error::Format(_))));
    }
}
