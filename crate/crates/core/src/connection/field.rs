use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chart::Chart;
use super::gauge::GaugeField;
use crate::error::{Error, Result};
use crate::grid::{HalfSpaceGrid, TensorGrid};
use crate::lie::{Matrix, Vector};
use crate::numerics::{central_diff4, BoxRegion};

/// Collar width, in nodes, that sampled compactly supported fields must keep at zero.
pub const COLLAR_NODES: usize = 2;

fn padded(a: &[f64], d: usize) -> Vector {
    Vector::from_iterator(d, (0..d).map(|k| a.get(k).copied().unwrap_or(0.0)))
}

/// Closed-form profile; vectors shorter than the domain dimension are zero-padded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant { value: Vec<f64> },
    /// `offset + S x` with `slope` given row by row (one row per fiber component).
    Linear { offset: Vec<f64>, slope: Vec<Vec<f64>> },
    /// `amplitude · exp(−|x − center|² / width²)`.
    Gaussian { amplitude: Vec<f64>, center: Vec<f64>, width: f64 },
}

impl Profile {
    pub fn dim_fiber(&self) -> usize {
        match self {
            Profile::Constant { value } => value.len(),
            Profile::Linear { offset, .. } => offset.len(),
            Profile::Gaussian { amplitude, .. } => amplitude.len(),
        }
    }

    fn eval(&self, x: &Vector) -> (Vector, Matrix) {
        let d = x.len();
        let m = self.dim_fiber();
        match self {
            Profile::Constant { value } => (Vector::from_column_slice(value), Matrix::zeros(m, d)),
            Profile::Linear { offset, slope } => {
                let s = Matrix::from_fn(m, d, |i, k| {
                    slope.get(i).and_then(|row| row.get(k)).copied().unwrap_or(0.0)
                });
                (Vector::from_column_slice(offset) + &s * x, s)
            }
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let dx = x - padded(center, d);
                let w2 = width * width;
                let g = (-dx.norm_squared() / w2).exp();
                let a = Vector::from_column_slice(amplitude);
                let jac = &a * (dx.transpose() * (-2.0 * g / w2));
                (a * g, jac)
            }
        }
    }
}

/// Smooth cutoff `exp(1 − 1/(1 − |x−c|²/R²))` on the ball `B(c, R)`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Window {
    fn eval(&self, x: &Vector) -> (f64, Vector) {
        let d = x.len();
        let dx = x - padded(&self.center, d);
        let r2 = self.radius * self.radius;
        let q = dx.norm_squared() / r2;
        if q >= 1.0 {
            return (0.0, Vector::zeros(d));
        }
        let one_minus = 1.0 - q;
        let w = (1.0 - 1.0 / one_minus).exp();
        let dq = -w / (one_minus * one_minus);
        (w, dx * (2.0 * dq / r2))
    }

    pub fn bounding_box(&self, d: usize) -> BoxRegion {
        let c = padded(&self.center, d);
        BoxRegion {
            lo: c.iter().map(|v| v - self.radius).collect(),
            hi: c.iter().map(|v| v + self.radius).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub profile: Profile,
    #[serde(default)]
    pub window: Option<Window>,
}

impl AnalyticField {
    fn eval(&self, x: &Vector) -> (Vector, Matrix) {
        let (v, j) = self.profile.eval(x);
        match &self.window {
            None => (v, j),
            Some(w) => {
                let (wv, wg) = w.eval(x);
                let jac = j * wv + &v * wg.transpose();
                (v * wv, jac)
            }
        }
    }
}

/// Multilinear interpolant of node data on a tensor grid.
#[derive(Debug, Clone)]
pub struct SampledField {
    grid: TensorGrid,
    data: Vec<f64>,
    /// Outside the grid the field is zero rather than an error.
    zero_padded: bool,
}

impl SampledField {
    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn zero_padded(&self) -> bool {
        self.zero_padded
    }
}

pub type FieldFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    Zero,
    Analytic(AnalyticField),
    Sampled(SampledField),
    /// `φ U`.
    Gauged { inner: Arc<Field>, gauge: GaugeField },
    /// `U ∘ ψ`.
    Composed { inner: Arc<Field>, chart: Chart },
    /// `x ↦ U(x, 0)`.
    Trace { inner: Arc<Field> },
    /// `Σ cᵢ Uᵢ`.
    Combination(Vec<(f64, Arc<Field>)>),
    /// Arbitrary closure; derivative by fourth-order central differences.
    Custom { map: FieldFn, fd_step: f64, support: Support },
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Zero => write!(f, "Zero"),
            FieldKind::Analytic(a) => f.debug_tuple("Analytic").field(a).finish(),
            FieldKind::Sampled(s) => f
                .debug_struct("Sampled")
                .field("shape", &s.grid.shape())
                .finish(),
            FieldKind::Gauged { inner, gauge } => f
                .debug_struct("Gauged")
                .field("inner", inner)
                .field("gauge", gauge)
                .finish(),
            FieldKind::Composed { inner, chart } => f
                .debug_struct("Composed")
                .field("inner", inner)
                .field("chart", chart)
                .finish(),
            FieldKind::Trace { inner } => f.debug_struct("Trace").field("inner", inner).finish(),
            FieldKind::Combination(t) => f.debug_tuple("Combination").field(t).finish(),
            FieldKind::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

/// Where a field may be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Empty,
    Bounded(BoxRegion),
    Unbounded,
}

impl Support {
    fn union(self, other: Support) -> Support {
        match (self, other) {
            (Support::Empty, s) | (s, Support::Empty) => s,
            (Support::Bounded(a), Support::Bounded(b)) => Support::Bounded(BoxRegion {
                lo: a.lo.iter().zip(&b.lo).map(|(p, q)| p.min(*q)).collect(),
                hi: a.hi.iter().zip(&b.hi).map(|(p, q)| p.max(*q)).collect(),
            }),
            _ => Support::Unbounded,
        }
    }
}

/// Fiber-valued function `U: ℝ^d → ℝ^m`.
#[derive(Debug, Clone)]
pub struct Field {
    dim_domain: usize,
    dim_fiber: usize,
    kind: FieldKind,
}

impl Field {
    pub fn zero(d: usize, m: usize) -> Self {
        Field {
            dim_domain: d,
            dim_fiber: m,
            kind: FieldKind::Zero,
        }
    }

    pub fn constant(d: usize, value: Vec<f64>) -> Self {
        Field::analytic(
            d,
            AnalyticField {
                profile: Profile::Constant { value },
                window: None,
            },
        )
    }

    pub fn analytic(d: usize, a: AnalyticField) -> Self {
        Field {
            dim_domain: d,
            dim_fiber: a.profile.dim_fiber(),
            kind: FieldKind::Analytic(a),
        }
    }

    /// Raw interpolated field; evaluation outside the grid is an error.
    pub fn sampled(grid: TensorGrid, m: usize, data: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * m;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Field {
            dim_domain: grid.dim(),
            dim_fiber: m,
            kind: FieldKind::Sampled(SampledField {
                grid,
                data,
                zero_padded: false,
            }),
        })
    }

    /// Compactly supported bulk field on a half-space grid. Rejects data that is
    /// nonzero on the two outermost lateral node layers or on the top layer.
    pub fn sampled_half_space(grid: &HalfSpaceGrid, m: usize, data: Vec<f64>) -> Result<Self> {
        let tensor = grid.tensor();
        let mut f = Field::sampled(tensor, m, data)?;
        if let FieldKind::Sampled(s) = &mut f.kind {
            check_collar(s, m, grid.n, true)?;
            s.zero_padded = true;
        }
        Ok(f)
    }

    /// Compactly supported boundary field on the lateral grid of `grid`.
    pub fn sampled_boundary(grid: &HalfSpaceGrid, m: usize, data: Vec<f64>) -> Result<Self> {
        let tensor = grid.boundary_tensor();
        let mut f = Field::sampled(tensor, m, data)?;
        if let FieldKind::Sampled(s) = &mut f.kind {
            check_collar(s, m, grid.n, false)?;
            s.zero_padded = true;
        }
        Ok(f)
    }

    pub fn gauged(inner: Arc<Field>, gauge: GaugeField) -> Result<Self> {
        if gauge.dim_fiber() != inner.dim_fiber {
            return Err(Error::DimensionMismatch {
                expected: inner.dim_fiber,
                got: gauge.dim_fiber(),
            });
        }
        Ok(Field {
            dim_domain: inner.dim_domain,
            dim_fiber: inner.dim_fiber,
            kind: FieldKind::Gauged { inner, gauge },
        })
    }

    pub fn composed(inner: Arc<Field>, chart: Chart) -> Result<Self> {
        if chart.dim() != inner.dim_domain {
            return Err(Error::DimensionMismatch {
                expected: inner.dim_domain,
                got: chart.dim(),
            });
        }
        Ok(Field {
            dim_domain: inner.dim_domain,
            dim_fiber: inner.dim_fiber,
            kind: FieldKind::Composed { inner, chart },
        })
    }

    pub fn trace_of(inner: Arc<Field>) -> Result<Self> {
        if inner.dim_domain < 2 {
            return Err(Error::invalid("trace needs a domain of dimension at least 2"));
        }
        Ok(Field {
            dim_domain: inner.dim_domain - 1,
            dim_fiber: inner.dim_fiber,
            kind: FieldKind::Trace { inner },
        })
    }

    pub fn combination(terms: Vec<(f64, Arc<Field>)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::invalid("combination needs at least one term"))?;
        let (d, m) = (first.1.dim_domain, first.1.dim_fiber);
        for (_, f) in &terms {
            if f.dim_domain != d || f.dim_fiber != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: f.dim_fiber,
                });
            }
        }
        Ok(Field {
            dim_domain: d,
            dim_fiber: m,
            kind: FieldKind::Combination(terms),
        })
    }

    pub fn custom(d: usize, m: usize, map: FieldFn, fd_step: f64, support: Support) -> Self {
        Field {
            dim_domain: d,
            dim_fiber: m,
            kind: FieldKind::Custom {
                map,
                fd_step,
                support,
            },
        }
    }

    pub fn dim_domain(&self) -> usize {
        self.dim_domain
    }

    pub fn dim_fiber(&self) -> usize {
        self.dim_fiber
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FieldKind::Zero)
    }

    pub fn value(&self, x: &Vector) -> Result<Vector> {
        match &self.kind {
            FieldKind::Custom { map, .. } => {
                self.check(x)?;
                Ok(map(x))
            }
            FieldKind::Analytic(a) => {
                self.check(x)?;
                let (v, _) = a.profile.eval(x);
                Ok(match &a.window {
                    None => v,
                    Some(w) => v * w.eval(x).0,
                })
            }
            _ => self.value_and_jacobian(x).map(|(v, _)| v),
        }
    }

    pub fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.value_and_jacobian(x).map(|(_, j)| j)
    }

    /// `(U(x), DU(x))` with `DU(x)` as an m×d matrix.
    pub fn value_and_jacobian(&self, x: &Vector) -> Result<(Vector, Matrix)> {
        self.check(x)?;
        let (d, m) = (self.dim_domain, self.dim_fiber);
        match &self.kind {
            FieldKind::Zero => Ok((Vector::zeros(m), Matrix::zeros(m, d))),
            FieldKind::Analytic(a) => Ok(a.eval(x)),
            FieldKind::Sampled(s) => match s.grid.interpolate(&s.data, m, x) {
                Some(vj) => Ok(vj),
                None if s.zero_padded => Ok((Vector::zeros(m), Matrix::zeros(m, d))),
                None => Err(Error::StencilOutOfRange {
                    point: x.iter().copied().collect(),
                }),
            },
            FieldKind::Gauged { inner, gauge } => {
                let (u, du) = inner.value_and_jacobian(x)?;
                let phi = gauge.value(x)?;
                let mut jac = phi.matrix() * du;
                for k in 0..d {
                    let mut e = Vector::zeros(d);
                    e[k] = 1.0;
                    let col = gauge.derivative(x, &e)? * &u;
                    let mut target = jac.column_mut(k);
                    target += col;
                }
                Ok((phi.apply(&u), jac))
            }
            FieldKind::Composed { inner, chart } => {
                let y = chart.map(x)?;
                let (u, du) = inner.value_and_jacobian(&y)?;
                Ok((u, du * chart.jacobian(x)?))
            }
            FieldKind::Trace { inner } => {
                let mut y = Vector::zeros(d + 1);
                y.rows_mut(0, d).copy_from(x);
                let (u, du) = inner.value_and_jacobian(&y)?;
                Ok((u, du.columns(0, d).into_owned()))
            }
            FieldKind::Combination(terms) => {
                let mut v = Vector::zeros(m);
                let mut j = Matrix::zeros(m, d);
                for (c, f) in terms {
                    let (fv, fj) = f.value_and_jacobian(x)?;
                    v += fv * *c;
                    j += fj * *c;
                }
                Ok((v, j))
            }
            FieldKind::Custom { map, fd_step, .. } => {
                let mut j = Matrix::zeros(m, d);
                for k in 0..d {
                    let col = central_diff4(*fd_step, |t| {
                        let mut y = x.clone();
                        y[k] += t;
                        Ok(map(&y))
                    })?;
                    j.set_column(k, &col);
                }
                Ok((map(x), j))
            }
        }
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim_domain {
            return Err(Error::DimensionMismatch {
                expected: self.dim_domain,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Conservative box containing the support.
    pub fn support(&self) -> Support {
        match &self.kind {
            FieldKind::Zero => Support::Empty,
            FieldKind::Analytic(a) => match &a.window {
                Some(w) => Support::Bounded(w.bounding_box(self.dim_domain)),
                None => Support::Unbounded,
            },
            FieldKind::Sampled(s) => sampled_support(s, self.dim_fiber),
            FieldKind::Gauged { inner, .. } => inner.support(),
            FieldKind::Composed { .. } => Support::Unbounded,
            FieldKind::Trace { inner } => match inner.support() {
                Support::Bounded(b) => {
                    let d = self.dim_domain;
                    if b.lo[d] > 0.0 || b.hi[d] < 0.0 {
                        Support::Empty
                    } else {
                        Support::Bounded(BoxRegion {
                            lo: b.lo[..d].to_vec(),
                            hi: b.hi[..d].to_vec(),
                        })
                    }
                }
                other => other,
            },
            FieldKind::Combination(terms) => terms
                .iter()
                .filter(|(c, _)| *c != 0.0)
                .fold(Support::Empty, |acc, (_, f)| acc.union(f.support())),
            FieldKind::Custom { support, .. } => support.clone(),
        }
    }

    /// Node values on `grid`, node-major with m values per node.
    pub fn sample_on(&self, grid: &TensorGrid) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let rows: Vec<Result<Vector>> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.value(&grid.node(i)))
            .collect();
        let mut out = Vec::with_capacity(grid.len() * self.dim_fiber);
        for r in rows {
            out.extend(r?.iter());
        }
        Ok(out)
    }
}

fn check_collar(s: &SampledField, m: usize, n_lateral: usize, top: bool) -> Result<()> {
    let shape = s.grid.shape();
    for node in 0..s.grid.len() {
        let idx = s.grid.multi_index(node);
        let in_collar = (0..n_lateral).any(|k| idx[k] <= COLLAR_NODES || idx[k] + COLLAR_NODES >= shape[k] - 1)
            || (top && idx[n_lateral] == shape[n_lateral] - 1);
        if !in_collar {
            continue;
        }
        let row = &s.data[node * m..(node + 1) * m];
        if row.iter().any(|v| *v != 0.0) {
            return Err(Error::UnsupportedField(format!(
                "nonzero value at node {:?} inside the zero collar",
                idx
            )));
        }
    }
    Ok(())
}

fn sampled_support(s: &SampledField, m: usize) -> Support {
    let axes = s.grid.axes();
    let d = axes.len();
    let mut lo_idx = vec![usize::MAX; d];
    let mut hi_idx = vec![0usize; d];
    let mut any = false;
    for node in 0..s.grid.len() {
        if s.data[node * m..(node + 1) * m].iter().all(|v| *v == 0.0) {
            continue;
        }
        any = true;
        let idx = s.grid.multi_index(node);
        for k in 0..d {
            lo_idx[k] = lo_idx[k].min(idx[k]);
            hi_idx[k] = hi_idx[k].max(idx[k]);
        }
    }
    if !any {
        return Support::Empty;
    }
    // Multilinear interpolation spreads a node value over its adjacent cells.
    Support::Bounded(BoxRegion {
        lo: (0..d).map(|k| axes[k][lo_idx[k].saturating_sub(1)]).collect(),
        hi: (0..d)
            .map(|k| axes[k][(hi_idx[k] + 1).min(axes[k].len() - 1)])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::ScalarFn;
    use crate::grid::QuadratureSpec;

    fn bump(d: usize) -> Field {
        Field::analytic(
            d,
            AnalyticField {
                profile: Profile::Gaussian {
                    amplitude: vec![1.0, -0.5],
                    center: vec![0.1, 0.2],
                    width: 0.4,
                },
                window: Some(Window {
                    center: vec![0.0, 0.3],
                    radius: 0.8,
                }),
            },
        )
    }

    fn fd_jacobian(f: &Field, x: &Vector) -> Matrix {
        let d = x.len();
        let mut j = Matrix::zeros(f.dim_fiber(), d);
        for k in 0..d {
            let col = central_diff4(1e-4, |t| {
                let mut y = x.clone();
                y[k] += t;
                f.value(&y)
            })
            .unwrap();
            j.set_column(k, &col);
        }
        j
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let f = bump(2);
        let x = Vector::from_vec(vec![0.2, 0.5]);
        assert!((f.jacobian(&x).unwrap() - fd_jacobian(&f, &x)).amax() < 1e-9);
        assert_eq!(f.value(&Vector::from_vec(vec![0.0, 1.2])).unwrap().amax(), 0.0);
    }

    #[test]
    fn gauged_and_composed_jacobians() {
        let f = Arc::new(bump(2));
        let g = Field::gauged(
            Arc::clone(&f),
            GaugeField::phase(ScalarFn::Wave { amplitude: 0.7, wavevector: vec![1.2, -0.4], phase: 0.2 }),
        )
        .unwrap();
        let x = Vector::from_vec(vec![0.15, 0.45]);
        assert!((g.jacobian(&x).unwrap() - fd_jacobian(&g, &x)).amax() < 1e-9);
        let c = Field::composed(f, Chart::shear(2, 0.2, 2.0, 0, 1).unwrap()).unwrap();
        assert!((c.jacobian(&x).unwrap() - fd_jacobian(&c, &x)).amax() < 1e-9);
    }

    #[test]
    fn collar_check_rejects_edge_values() {
        let q = QuadratureSpec::new(8, 8, 2.0, 1).unwrap();
        let grid = HalfSpaceGrid::new(1, 1.0, 1.0, q).unwrap();
        let tensor = grid.tensor();
        let mut data = vec![0.0; tensor.len() * 2];
        let centre = tensor.flat_index(&[4, 3]);
        data[centre * 2] = 1.0;
        assert!(Field::sampled_half_space(&grid, 2, data.clone()).is_ok());
        let edge = tensor.flat_index(&[2, 3]);
        data[edge * 2 + 1] = 1e-3;
        assert!(matches!(
            Field::sampled_half_space(&grid, 2, data),
            Err(Error::UnsupportedField(_))
        ));
    }

    #[test]
    fn trace_and_support() {
        let f = Arc::new(bump(2));
        let t = Field::trace_of(Arc::clone(&f)).unwrap();
        let x = Vector::from_vec(vec![0.3]);
        let direct = f.value(&Vector::from_vec(vec![0.3, 0.0])).unwrap();
        assert_eq!(t.value(&x).unwrap(), direct);
        match t.support() {
            Support::Bounded(b) => assert!((b.hi[0] - 0.8).abs() < 1e-15),
            other => panic!("unexpected support {other:?}"),
        }
    }
}
