//! Tensor-product grids over the truncated half-space and its boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{Matrix, Vector};
use crate::numerics::BoxRegion;

/// Row-major tensor grid with arbitrary (monotone) node coordinates per axis.
/// The last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    axes: Vec<Vec<f64>>,
}

/// Position of a point inside a grid cell.
struct CellLocation {
    base: Vec<usize>,
    frac: Vec<f64>,
    width: Vec<f64>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        for (k, axis) in axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::invalid(format!("grid axis {k} needs at least two nodes")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!("grid axis {k} is not strictly increasing")));
            }
        }
        Ok(TensorGrid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> BoxRegion {
        BoxRegion {
            lo: self.axes.iter().map(|a| a[0]).collect(),
            hi: self.axes.iter().map(|a| a[a.len() - 1]).collect(),
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            idx[k] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    pub fn node(&self, flat: usize) -> Vector {
        let idx = self.multi_index(flat);
        Vector::from_iterator(self.dim(), idx.iter().zip(&self.axes).map(|(&i, a)| a[i]))
    }

    fn locate(&self, x: &Vector) -> Option<CellLocation> {
        if x.len() != self.dim() {
            return None;
        }
        let d = self.dim();
        let mut loc = CellLocation {
            base: vec![0; d],
            frac: vec![0.0; d],
            width: vec![0.0; d],
        };
        for k in 0..d {
            let axis = &self.axes[k];
            let lo = axis[0];
            let hi = axis[axis.len() - 1];
            let slack = 1e-12 * (hi - lo).max(1.0);
            let v = x[k];
            if !(v >= lo - slack && v <= hi + slack) {
                return None;
            }
            let v = v.clamp(lo, hi);
            // Index of the cell [axis[i], axis[i+1]] containing v.
            let i = axis.partition_point(|&a| a <= v).saturating_sub(1).min(axis.len() - 2);
            let w = axis[i + 1] - axis[i];
            loc.base[k] = i;
            loc.width[k] = w;
            loc.frac[k] = (v - axis[i]) / w;
        }
        Some(loc)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.locate(x).is_some()
    }

    /// Multilinear interpolation of `data` (`m` values per node) and the exact
    /// derivative of the interpolant, as an m×dim Jacobian.
    pub fn interpolate(&self, data: &[f64], m: usize, x: &Vector) -> Option<(Vector, Matrix)> {
        let loc = self.locate(x)?;
        let d = self.dim();
        let mut value = Vector::zeros(m);
        let mut jac = Matrix::zeros(m, d);
        for mask in 0..(1usize << d) {
            let mut idx = loc.base.clone();
            let mut weight = 1.0;
            let mut dweight = vec![1.0; d];
            for k in 0..d {
                let bit = mask >> k & 1 == 1;
                if bit {
                    idx[k] += 1;
                }
                let (wk, dk) = if bit {
                    (loc.frac[k], 1.0 / loc.width[k])
                } else {
                    (1.0 - loc.frac[k], -1.0 / loc.width[k])
                };
                for (j, dw) in dweight.iter_mut().enumerate() {
                    *dw *= if j == k { dk } else { wk };
                }
                weight *= wk;
            }
            let off = self.flat_index(&idx) * m;
            let row = &data[off..off + m];
            for i in 0..m {
                value[i] += weight * row[i];
                for k in 0..d {
                    jac[(i, k)] += dweight[k] * row[i];
                }
            }
        }
        Some((value, jac))
    }
}

/// Cell counts and quadrature controls shared by the bulk and boundary rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Lateral cells per axis.
    pub n_lat: usize,
    /// Vertical cells.
    pub n_vert: usize,
    /// Vertical grading exponent: nodes at `H (j/n_vert)^grading`.
    #[serde(default = "default_grading")]
    pub grading: f64,
    /// Diagonal-exclusion radius for the Gagliardo double sum, in cells.
    #[serde(default = "default_r_excl")]
    pub r_excl: usize,
}

fn default_grading() -> f64 {
    2.0
}

fn default_r_excl() -> usize {
    1
}

impl QuadratureSpec {
    pub fn new(n_lat: usize, n_vert: usize, grading: f64, r_excl: usize) -> Result<Self> {
        let q = QuadratureSpec {
            n_lat,
            n_vert,
            grading,
            r_excl,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat < 8 || self.n_vert < 8 {
            return Err(Error::invalid(format!(
                "quadrature needs at least 8 cells per direction (got lateral {}, vertical {})",
                self.n_lat, self.n_vert
            )));
        }
        if self.r_excl < 1 {
            return Err(Error::invalid("exclusion radius must be at least one cell"));
        }
        if !(self.grading >= 1.0) {
            return Err(Error::invalid("vertical grading exponent must be >= 1"));
        }
        Ok(())
    }
}

/// Truncated half-space `[−L, L]^n × [0, H]` with a graded vertical mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceGrid {
    pub n: usize,
    pub half_width: f64,
    pub height: f64,
    pub spec: QuadratureSpec,
}

/// Quadrature cell: center, volume and the exact moment of the vertical weight.
#[derive(Debug, Clone)]
pub struct VerticalCell {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
}

impl VerticalCell {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `∫_lo^hi z^α dz`, exact.
    pub fn weight_moment(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return self.width();
        }
        let e = alpha + 1.0;
        (self.hi.powf(e) - self.lo.powf(e)) / e
    }
}

impl HalfSpaceGrid {
    pub fn new(n: usize, half_width: f64, height: f64, spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::invalid("boundary dimension must be at least 1"));
        }
        if !(half_width > 0.0 && height > 0.0) {
            return Err(Error::invalid("grid extents must be positive"));
        }
        Ok(HalfSpaceGrid {
            n,
            half_width,
            height,
            spec,
        })
    }

    pub fn lateral_step(&self) -> f64 {
        2.0 * self.half_width / self.spec.n_lat as f64
    }

    pub fn lateral_axis(&self) -> Vec<f64> {
        let h = self.lateral_step();
        (0..=self.spec.n_lat)
            .map(|i| -self.half_width + i as f64 * h)
            .collect()
    }

    pub fn vertical_axis(&self) -> Vec<f64> {
        let nv = self.spec.n_vert as f64;
        (0..=self.spec.n_vert)
            .map(|j| self.height * (j as f64 / nv).powf(self.spec.grading))
            .collect()
    }

    /// Node grid of the half-space box (lateral axes, then vertical).
    pub fn tensor(&self) -> TensorGrid {
        let mut axes = vec![self.lateral_axis(); self.n];
        axes.push(self.vertical_axis());
        TensorGrid { axes }
    }

    /// Node grid of the boundary box.
    pub fn boundary_tensor(&self) -> TensorGrid {
        TensorGrid {
            axes: vec![self.lateral_axis(); self.n],
        }
    }

    pub fn lateral_region(&self) -> BoxRegion {
        BoxRegion::cube(self.n, self.half_width)
    }

    pub fn region(&self) -> BoxRegion {
        let mut lo = vec![-self.half_width; self.n];
        let mut hi = vec![self.half_width; self.n];
        lo.push(0.0);
        hi.push(self.height);
        BoxRegion { lo, hi }
    }

    /// Lateral cell centers, row-major.
    pub fn lateral_centers(&self) -> Vec<Vector> {
        let h = self.lateral_step();
        let nl = self.spec.n_lat;
        let total = nl.pow(self.n as u32);
        (0..total)
            .map(|mut flat| {
                let mut c = vec![0.0; self.n];
                for k in (0..self.n).rev() {
                    c[k] = -self.half_width + (flat % nl) as f64 * h + 0.5 * h;
                    flat /= nl;
                }
                Vector::from_vec(c)
            })
            .collect()
    }

    pub fn lateral_cell_volume(&self) -> f64 {
        self.lateral_step().powi(self.n as i32)
    }

    pub fn vertical_cells(&self) -> Vec<VerticalCell> {
        self.vertical_axis()
            .windows(2)
            .map(|w| VerticalCell {
                lo: w[0],
                hi: w[1],
                mid: 0.5 * (w[0] + w[1]),
            })
            .collect()
    }

    /// Same box with the lateral cell count replaced.
    pub fn with_lateral_cells(&self, n_lat: usize) -> Result<Self> {
        let mut spec = self.spec;
        spec.n_lat = n_lat;
        HalfSpaceGrid::new(self.n, self.half_width, self.height, spec)
    }

    pub fn with_vertical(&self, n_vert: usize, grading: f64) -> Result<Self> {
        let mut spec = self.spec;
        spec.n_vert = n_vert;
        spec.grading = grading;
        HalfSpaceGrid::new(self.n, self.half_width, self.height, spec)
    }
}
