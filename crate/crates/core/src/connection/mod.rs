//! Connection forms, covariant derivatives, curvature, gauge transforms and pullbacks.

mod chart;
mod field;
mod gauge;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use chart::{Chart, ChartJacobian, ChartKind, ChartMap, ChartSpec, MAX_CONDITION};
pub use field::{AnalyticField, Field, FieldFn, FieldKind, Profile, SampledField, Support, Window};
pub use gauge::{GaugeFn, GaugeField, GaugeKind, ScalarFn};

use crate::error::{Error, Result};
use crate::grid::TensorGrid;
use crate::lie::{commutator, op_norm, Matrix, SkewMap, Vector};
use crate::numerics::{central_diff4, halton, BoxRegion};

/// Relative skewness tolerance asserted on gauge-transformed forms.
pub const GAUGE_SKEW_TOL: f64 = 1e-10;
/// Random orthonormal direction pairs added per sample point in sup-norm sweeps.
pub const RANDOM_PAIRS_PER_POINT: usize = 8;

/// Affine vector potential `A(x) = a + M x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPotential {
    pub offset: Vector,
    pub jacobian: Matrix,
}

impl VectorPotential {
    pub fn constant(a: Vector) -> Self {
        let d = a.len();
        VectorPotential {
            offset: a,
            jacobian: Matrix::zeros(d, d),
        }
    }

    /// Uniform field of strength `b` in the (0, 1) plane: `A = b/2 (−x₂, x₁, 0, …)`.
    pub fn flux(d: usize, b: f64) -> Self {
        let mut m = Matrix::zeros(d, d);
        m[(0, 1)] = -0.5 * b;
        m[(1, 0)] = 0.5 * b;
        VectorPotential {
            offset: Vector::zeros(d),
            jacobian: m,
        }
    }

    pub fn value(&self, x: &Vector) -> Vector {
        &self.offset + &self.jacobian * x
    }
}

/// Grid-sampled connection: `d` coefficient matrices (row-major m×m) per node.
#[derive(Debug, Clone)]
pub struct SampledConnection {
    grid: TensorGrid,
    data: Vec<f64>,
}

impl SampledConnection {
    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone)]
pub enum ConnectionKind {
    Zero,
    /// `Γ[v] = Σ vᵢ Gᵢ`.
    Constant(Vec<SkewMap>),
    /// `Γ[v] = (A(x)·v) J` on ℝ² ≅ ℂ.
    AbelianMagnetic(VectorPotential),
    /// `Γ[eᵢ](x) = baseᵢ + Σ_k x_k slopes[i][k]`.
    Affine {
        base: Vec<SkewMap>,
        slopes: Vec<Vec<SkewMap>>,
    },
    Sampled(SampledConnection),
    GaugeTransformed {
        inner: Arc<ConnectionForm>,
        gauge: GaugeField,
    },
    Pullback {
        inner: Arc<ConnectionForm>,
        chart: Chart,
    },
    /// Boundary restriction `Γ∥(x)[v] = Γ(x,0)[v,0]`.
    Restricted { inner: Arc<ConnectionForm> },
}

/// A connection form `x ↦ Lin(ℝ^d, o(m))`.
#[derive(Debug, Clone)]
pub struct ConnectionForm {
    dim_domain: usize,
    dim_fiber: usize,
    kind: ConnectionKind,
    domain: Option<BoxRegion>,
    fd_step: f64,
}

fn check_generators(list: &[SkewMap], m: usize) -> Result<()> {
    match list.iter().find(|g| g.dim() != m) {
        Some(g) => Err(Error::DimensionMismatch {
            expected: m,
            got: g.dim(),
        }),
        None => Ok(()),
    }
}

fn check_len(v: &Vector, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

fn embed(x: &Vector) -> Vector {
    let mut y = Vector::zeros(x.len() + 1);
    y.rows_mut(0, x.len()).copy_from(x);
    y
}

fn to_stencil_error(e: Error) -> Error {
    match e {
        Error::OutOfDomain { point } => Error::StencilOutOfRange { point },
        other => other,
    }
}

fn mat_to_vec(a: &Matrix) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

impl ConnectionForm {
    fn build(dim_domain: usize, dim_fiber: usize, kind: ConnectionKind) -> Self {
        ConnectionForm {
            dim_domain,
            dim_fiber,
            kind,
            domain: None,
            fd_step: 1e-3,
        }
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self::build(d, m, ConnectionKind::Zero)
    }

    pub fn constant(generators: Vec<SkewMap>) -> Result<Self> {
        let m = generators
            .first()
            .map(SkewMap::dim)
            .ok_or_else(|| Error::invalid("constant connection needs at least one generator"))?;
        check_generators(&generators, m)?;
        Ok(Self::build(generators.len(), m, ConnectionKind::Constant(generators)))
    }

    pub fn abelian(potential: VectorPotential) -> Result<Self> {
        let d = potential.offset.len();
        if potential.jacobian.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: potential.jacobian.nrows(),
            });
        }
        Ok(Self::build(d, 2, ConnectionKind::AbelianMagnetic(potential)))
    }

    pub fn affine(base: Vec<SkewMap>, slopes: Vec<Vec<SkewMap>>) -> Result<Self> {
        let d = base.len();
        let m = base
            .first()
            .map(SkewMap::dim)
            .ok_or_else(|| Error::invalid("affine connection needs at least one direction"))?;
        check_generators(&base, m)?;
        if slopes.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: slopes.len(),
            });
        }
        for row in &slopes {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            check_generators(row, m)?;
        }
        Ok(Self::build(d, m, ConnectionKind::Affine { base, slopes }))
    }

    /// Samples `source` at every node of `grid`; evaluation then interpolates
    /// each coefficient matrix multilinearly and re-skews.
    pub fn sampled_from(source: &ConnectionForm, grid: TensorGrid) -> Result<Self> {
        let d = source.dim_domain;
        let m = source.dim_fiber;
        check_len(&Vector::zeros(grid.dim()), d)?;
        let mut data = Vec::with_capacity(grid.len() * d * m * m);
        for node in 0..grid.len() {
            let x = grid.node(node);
            for c in source.coefficients(&x)? {
                for r in 0..m {
                    for k in 0..m {
                        data.push(c[(r, k)]);
                    }
                }
            }
        }
        Self::sampled(grid, m, data)
    }

    pub fn sampled(grid: TensorGrid, m: usize, data: Vec<f64>) -> Result<Self> {
        let d = grid.dim();
        let expected = grid.len() * d * m * m;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        let domain = grid.bounds();
        let mut form = Self::build(d, m, ConnectionKind::Sampled(SampledConnection { grid, data }));
        form.fd_step = 1e-3 * domain.diameter();
        form.domain = Some(domain);
        Ok(form)
    }

    pub fn with_domain(mut self, domain: BoxRegion) -> Result<Self> {
        if domain.dim() != self.dim_domain {
            return Err(Error::DimensionMismatch {
                expected: self.dim_domain,
                got: domain.dim(),
            });
        }
        self.fd_step = 1e-3 * domain.diameter();
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn dim_domain(&self) -> usize {
        self.dim_domain
    }

    pub fn dim_fiber(&self) -> usize {
        self.dim_fiber
    }

    pub fn kind(&self) -> &ConnectionKind {
        &self.kind
    }

    pub fn domain(&self) -> Option<&BoxRegion> {
        self.domain.as_ref()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    /// True when the form is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ConnectionKind::Zero)
    }

    fn check_point(&self, x: &Vector) -> Result<()> {
        check_len(x, self.dim_domain)?;
        match &self.domain {
            Some(b) if !b.contains(x, 1e-12 * b.diameter().max(1.0)) => Err(Error::OutOfDomain {
                point: x.iter().copied().collect(),
            }),
            _ => Ok(()),
        }
    }

    /// The coefficient matrices `Γ(x)[eᵢ]`, i in 0..d.
    pub fn coefficients(&self, x: &Vector) -> Result<Vec<Matrix>> {
        self.check_point(x)?;
        let d = self.dim_domain;
        let m = self.dim_fiber;
        match &self.kind {
            ConnectionKind::Zero => Ok(vec![Matrix::zeros(m, m); d]),
            ConnectionKind::Constant(g) => Ok(g.iter().map(|s| s.matrix().clone()).collect()),
            ConnectionKind::AbelianMagnetic(a) => {
                let j = SkewMap::planar(1.0).into_matrix();
                Ok(a.value(x).iter().map(|ai| &j * *ai).collect())
            }
            ConnectionKind::Affine { base, slopes } => Ok((0..d)
                .map(|i| {
                    let mut c = base[i].matrix().clone();
                    for k in 0..d {
                        c += slopes[i][k].matrix() * x[k];
                    }
                    c
                })
                .collect()),
            ConnectionKind::Sampled(s) => {
                let (val, _) = s.grid.interpolate(&s.data, d * m * m, x).ok_or_else(|| {
                    Error::OutOfDomain {
                        point: x.iter().copied().collect(),
                    }
                })?;
                Ok((0..d)
                    .map(|i| {
                        let block = Matrix::from_row_slice(m, m, &val.as_slice()[i * m * m..(i + 1) * m * m]);
                        (&block - block.transpose()) * 0.5
                    })
                    .collect())
            }
            _ => (0..d)
                .map(|i| {
                    let mut e = Vector::zeros(d);
                    e[i] = 1.0;
                    self.eval_matrix(x, &e)
                })
                .collect(),
        }
    }

    fn eval_matrix(&self, x: &Vector, v: &Vector) -> Result<Matrix> {
        check_len(v, self.dim_domain)?;
        match &self.kind {
            ConnectionKind::GaugeTransformed { inner, gauge } => {
                self.check_point(x)?;
                let phi = gauge.value(x)?;
                let dphi = gauge.derivative(x, v)?;
                let p = phi.matrix();
                let out = -dphi * p.transpose() + p * inner.eval_matrix(x, v)? * p.transpose();
                let defect = (&out + out.transpose()).amax();
                if defect > GAUGE_SKEW_TOL * out.amax().max(1.0) {
                    return Err(Error::NonOrthogonalGauge { defect });
                }
                Ok((&out - out.transpose()) * 0.5)
            }
            ConnectionKind::Pullback { inner, chart } => {
                self.check_point(x)?;
                let y = chart.map(x)?;
                let jv = chart.jacobian(x)? * v;
                inner.eval_matrix(&y, &jv)
            }
            ConnectionKind::Restricted { inner } => {
                self.check_point(x)?;
                inner.eval_matrix(&embed(x), &embed(v))
            }
            _ => {
                let coeffs = self.coefficients(x)?;
                let mut out = Matrix::zeros(self.dim_fiber, self.dim_fiber);
                for (c, vi) in coeffs.iter().zip(v.iter()) {
                    if *vi != 0.0 {
                        out += c * *vi;
                    }
                }
                Ok(out)
            }
        }
    }

    /// `Γ(x)[v]`.
    pub fn eval(&self, x: &Vector, v: &Vector) -> Result<SkewMap> {
        Ok(SkewMap::skew_part(&self.eval_matrix(x, v)?))
    }

    /// `DΓ(x)[v, w] = d/dt Γ(x + t v)[w]` at t = 0.
    pub fn derivative(&self, x: &Vector, v: &Vector, w: &Vector) -> Result<Matrix> {
        check_len(v, self.dim_domain)?;
        check_len(w, self.dim_domain)?;
        let d = self.dim_domain;
        let m = self.dim_fiber;
        match &self.kind {
            ConnectionKind::Zero | ConnectionKind::Constant(_) => {
                self.check_point(x)?;
                Ok(Matrix::zeros(m, m))
            }
            ConnectionKind::AbelianMagnetic(a) => {
                self.check_point(x)?;
                let rate = w.dot(&(&a.jacobian * v));
                Ok(SkewMap::planar(rate).into_matrix())
            }
            ConnectionKind::Affine { slopes, .. } => {
                self.check_point(x)?;
                let mut out = Matrix::zeros(m, m);
                for i in 0..d {
                    for k in 0..d {
                        let c = w[i] * v[k];
                        if c != 0.0 {
                            out += slopes[i][k].matrix() * c;
                        }
                    }
                }
                Ok(out)
            }
            ConnectionKind::Sampled(s) => {
                let (_, jac) = s
                    .grid
                    .interpolate(&s.data, d * m * m, x)
                    .ok_or_else(|| Error::StencilOutOfRange {
                        point: x.iter().copied().collect(),
                    })?;
                let rates = jac * v;
                let mut out = Matrix::zeros(m, m);
                for i in 0..d {
                    let block = Matrix::from_row_slice(m, m, &rates.as_slice()[i * m * m..(i + 1) * m * m]);
                    out += block * w[i];
                }
                Ok((&out - out.transpose()) * 0.5)
            }
            ConnectionKind::Restricted { inner } => {
                self.check_point(x)?;
                inner.derivative(&embed(x), &embed(v), &embed(w))
            }
            ConnectionKind::GaugeTransformed { .. } | ConnectionKind::Pullback { .. } => {
                let col = central_diff4(self.fd_step, |t| {
                    let y = x + v * t;
                    self.eval_matrix(&y, w).map(|a| mat_to_vec(&a))
                })
                .map_err(to_stencil_error)?;
                let out = Matrix::from_column_slice(m, m, col.as_slice());
                Ok((&out - out.transpose()) * 0.5)
            }
        }
    }

    /// `K(x)[v, w] = DΓ[v,w] − DΓ[w,v] + [Γ[v], Γ[w]]`.
    pub fn curvature(&self, x: &Vector, v: &Vector, w: &Vector) -> Result<SkewMap> {
        let dvw = self.derivative(x, v, w)?;
        let dwv = self.derivative(x, w, v)?;
        let gv = self.eval(x, v)?;
        let gw = self.eval(x, w)?;
        let bracket = commutator(&gv, &gw)?;
        Ok(SkewMap::skew_part(&(dvw - dwv + bracket.matrix())))
    }

    /// `Γ′ = −(Dφ)φ⁻¹ + φΓφ⁻¹`.
    pub fn gauge_transform(self: &Arc<Self>, gauge: GaugeField) -> Result<ConnectionForm> {
        if gauge.dim_fiber() != self.dim_fiber {
            return Err(Error::DimensionMismatch {
                expected: self.dim_fiber,
                got: gauge.dim_fiber(),
            });
        }
        let mut form = Self::build(
            self.dim_domain,
            self.dim_fiber,
            ConnectionKind::GaugeTransformed {
                inner: Arc::clone(self),
                gauge,
            },
        );
        form.domain = self.domain.clone();
        form.fd_step = self.fd_step;
        Ok(form)
    }

    /// `ψ*Γ(x)[v] = Γ(ψ(x))[Dψ(x) v]`.
    pub fn pullback(self: &Arc<Self>, chart: Chart) -> Result<ConnectionForm> {
        if chart.dim() != self.dim_domain {
            return Err(Error::DimensionMismatch {
                expected: self.dim_domain,
                got: chart.dim(),
            });
        }
        let mut form = Self::build(
            self.dim_domain,
            self.dim_fiber,
            ConnectionKind::Pullback {
                inner: Arc::clone(self),
                chart,
            },
        );
        form.fd_step = self.fd_step;
        Ok(form)
    }

    /// Boundary connection on ℝ^{d−1}: `Γ∥(x)[v] = Γ(x,0)[v,0]`.
    pub fn restrict_to_boundary(self: &Arc<Self>) -> Result<ConnectionForm> {
        if self.dim_domain < 2 {
            return Err(Error::invalid("boundary restriction needs a domain of dimension at least 2"));
        }
        let n = self.dim_domain - 1;
        let mut form = Self::build(n, self.dim_fiber, ConnectionKind::Restricted { inner: Arc::clone(self) });
        if let Some(b) = &self.domain {
            form.domain = Some(BoxRegion {
                lo: b.lo[..n].to_vec(),
                hi: b.hi[..n].to_vec(),
            });
        }
        form.fd_step = self.fd_step;
        Ok(form)
    }
}

/// `D_Γ U(x)` as an m×d matrix; column k is `DU(x)[e_k] + Γ(x)[e_k] U(x)`.
pub fn covariant_derivative(u: &Field, gamma: &ConnectionForm, x: &Vector) -> Result<Matrix> {
    if u.dim_fiber() != gamma.dim_fiber() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim_fiber(),
            got: u.dim_fiber(),
        });
    }
    if u.dim_domain() != gamma.dim_domain() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim_domain(),
            got: u.dim_domain(),
        });
    }
    let (val, mut jac) = u.value_and_jacobian(x)?;
    if gamma.is_zero() {
        return Ok(jac);
    }
    for (k, c) in gamma.coefficients(x)?.iter().enumerate() {
        let col = c * &val;
        let mut target = jac.column_mut(k);
        target += col;
    }
    Ok(jac)
}

/// Generates a random orthonormal pair in ℝ^d (d ≥ 2).
pub fn random_orthonormal_pair<R: Rng>(rng: &mut R, d: usize) -> (Vector, Vector) {
    loop {
        let a = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let b = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let na = a.norm();
        if na < 1e-3 {
            continue;
        }
        let e1 = a / na;
        let b = &b - &e1 * e1.dot(&b);
        let nb = b.norm();
        if nb < 1e-3 {
            continue;
        }
        return (e1, b / nb);
    }
}

/// Largest `op_norm(K(x)[v,w])` over the coordinate pairs `(eᵢ, eⱼ)`, the
/// `extra` pairs, and `RANDOM_PAIRS_PER_POINT` seeded random orthonormal pairs.
/// Pairs in `extra` must be orthonormal.
pub fn curvature_max_at(
    gamma: &ConnectionForm,
    x: &Vector,
    extra: &[(Vector, Vector)],
    seed: u64,
) -> Result<f64> {
    let d = gamma.dim_domain();
    if d < 2 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    let e = |i: usize| {
        let mut v = Vector::zeros(d);
        v[i] = 1.0;
        v
    };
    for i in 0..d {
        for j in (i + 1)..d {
            best = best.max(gamma.curvature(x, &e(i), &e(j))?.op_norm());
        }
    }
    for (v, w) in extra {
        best = best.max(gamma.curvature(x, v, w)?.op_norm());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PAIRS_PER_POINT {
        let (v, w) = random_orthonormal_pair(&mut rng, d);
        best = best.max(gamma.curvature(x, &v, &w)?.op_norm());
    }
    Ok(best)
}

/// Sampled sup-norm of the curvature over `points`. Each point's random pairs
/// are seeded by its index, so the estimate is monotone on nested point lists.
pub fn curvature_sup_over(
    gamma: &ConnectionForm,
    points: &[Vector],
    extra: &[(Vector, Vector)],
) -> Result<f64> {
    use rayon::prelude::*;
    let values: Vec<Result<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| curvature_max_at(gamma, x, extra, i as u64))
        .collect();
    let mut best: f64 = 0.0;
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

/// Box corners followed by the first `samples` Halton points of `region`.
pub fn sup_norm_points(region: &BoxRegion, samples: usize) -> Vec<Vector> {
    let d = region.dim();
    let mut points = region.corners();
    points.extend((0..samples as u64).map(|i| region.from_unit(&halton(i, d))));
    points
}

/// `sup_{x, |v|=|w|=1, v⊥w} ‖K(x)[v,w]‖` estimated on nested Halton samples of `region`.
pub fn curvature_sup_norm(gamma: &ConnectionForm, region: &BoxRegion, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("curvature_sup_norm needs at least one sample"));
    }
    curvature_sup_over(gamma, &sup_norm_points(region, samples), &[])
}

/// `‖D_Γ(D_Γ U[w])[v] − D_Γ(D_Γ U[v])[w] − K[v,w]U‖` with the outer covariant
/// derivatives taken by second-order central differences of step `h`.
pub fn commutator_defect(
    u: &Field,
    gamma: &ConnectionForm,
    x: &Vector,
    v: &Vector,
    w: &Vector,
    h: f64,
) -> Result<f64> {
    let first = |y: &Vector, dir: &Vector| -> Result<Vector> {
        covariant_derivative(u, gamma, y).map(|j| j * dir)
    };
    let outer = |a: &Vector, b: &Vector| -> Result<Vector> {
        let fp = first(&(x + a * h), b).map_err(to_stencil_error)?;
        let fm = first(&(x - a * h), b).map_err(to_stencil_error)?;
        let centre = first(x, b)?;
        Ok((fp - fm) / (2.0 * h) + gamma.eval(x, a)?.matrix() * centre)
    };
    let lhs = outer(v, w)? - outer(w, v)?;
    let k = gamma.curvature(x, v, w)?;
    let rhs = k.matrix() * u.value(x)?;
    Ok((lhs - rhs).norm())
}

/// Operator norm of `K_{Γ′}(x)[v,w] − φ(x) K_Γ(x)[v,w] φ(x)⁻¹`.
pub fn curvature_gauge_defect(
    gamma: &ConnectionForm,
    transformed: &ConnectionForm,
    gauge: &GaugeField,
    x: &Vector,
    v: &Vector,
    w: &Vector,
) -> Result<f64> {
    let k = gamma.curvature(x, v, w)?;
    let kp = transformed.curvature(x, v, w)?;
    let phi = gauge.value(x)?;
    Ok(op_norm(&(kp.matrix() - k.conjugate(&phi).matrix())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{expm, so3_generator};

    fn v2(a: f64, b: f64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn evaluation_examples() {
        let g = ConnectionForm::constant(vec![so3_generator(0), so3_generator(1)]).unwrap();
        let e1 = v2(1.0, 0.0);
        assert_eq!(g.eval(&v2(0.3, 0.1), &e1).unwrap(), so3_generator(0));
        let b = 1.7;
        let a = ConnectionForm::abelian(VectorPotential::flux(2, b)).unwrap();
        let out = a.eval(&v2(1.0, 0.0), &v2(0.0, 1.0)).unwrap();
        assert!((out.matrix() - SkewMap::planar(b / 2.0).matrix()).amax() < 1e-15);
        let z = ConnectionForm::zero(2, 3);
        assert_eq!(z.eval(&e1, &e1).unwrap().matrix().amax(), 0.0);
    }

    #[test]
    fn curvature_examples() {
        let x = v2(0.2, -0.4);
        let (e1, e2) = (v2(1.0, 0.0), v2(0.0, 1.0));
        let g = ConnectionForm::constant(vec![so3_generator(0), so3_generator(1)]).unwrap();
        let k = g.curvature(&x, &e1, &e2).unwrap();
        assert!((k.matrix() - so3_generator(2).matrix()).amax() < 1e-15);
        let a = ConnectionForm::abelian(VectorPotential::flux(2, 1.3)).unwrap();
        let k = a.curvature(&x, &e1, &e2).unwrap();
        assert!((k.matrix() - SkewMap::planar(1.3).matrix()).amax() < 1e-14);
        let region = BoxRegion::cube(2, 1.0);
        let sup = curvature_sup_norm(&a, &region, 16).unwrap();
        assert!((sup - 1.3).abs() < 1e-12);
        assert!((curvature_sup_norm(&g, &region, 4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauge_transform_examples() {
        let zero = Arc::new(ConnectionForm::zero(2, 3));
        let gen = so3_generator(1);
        let gauge = GaugeField::exp_product(vec![(
            ScalarFn::Affine { offset: 0.0, gradient: vec![1.0, 0.0] },
            gen.clone(),
        )])
        .unwrap();
        let gp = zero.gauge_transform(gauge).unwrap();
        let v = v2(0.7, -0.2);
        let out = gp.eval(&v2(0.3, 0.5), &v).unwrap();
        assert!((out.matrix() + gen.matrix() * 0.7).amax() < 1e-14);

        let a = Arc::new(ConnectionForm::abelian(VectorPotential::flux(2, 1.0)).unwrap());
        let theta = ScalarFn::Wave { amplitude: 0.8, wavevector: vec![1.0, 2.0], phase: 0.0 };
        let ap = a.gauge_transform(GaugeField::phase(theta.clone())).unwrap();
        let x = v2(0.1, 0.4);
        let expected = a.eval(&x, &v).unwrap().matrix() - SkewMap::planar(theta.gradient(&x).dot(&v)).matrix();
        assert!((ap.eval(&x, &v).unwrap().matrix() - expected).amax() < 1e-14);
    }

    #[test]
    fn pullback_examples() {
        let g = Arc::new(ConnectionForm::constant(vec![so3_generator(0), so3_generator(2)]).unwrap());
        let x = v2(0.3, 0.2);
        let v = v2(0.5, -1.0);
        let dil = g.pullback(Chart::dilation(2, 2.0).unwrap()).unwrap();
        assert!((dil.eval(&x, &v).unwrap().matrix() - g.eval(&x, &v).unwrap().matrix() * 2.0).amax() < 1e-14);
        let rot = g.pullback(Chart::rotation(2, 0.6).unwrap()).unwrap();
        let (s, c) = 0.6f64.sin_cos();
        let rv = v2(c * v[0] - s * v[1], s * v[0] + c * v[1]);
        assert!((rot.eval(&x, &v).unwrap().matrix() - g.eval(&x, &rv).unwrap().matrix()).amax() < 1e-14);
    }

    #[test]
    fn sampled_form_reproduces_affine_form() {
        let base = vec![so3_generator(0), so3_generator(1)];
        let slopes = vec![
            vec![so3_generator(2), so3_generator(0).scale(0.5)],
            vec![so3_generator(1).scale(-0.3), so3_generator(2)],
        ];
        let aff = ConnectionForm::affine(base, slopes).unwrap();
        let axis: Vec<f64> = (0..=8).map(|i| -1.0 + 0.25 * i as f64).collect();
        let grid = TensorGrid::new(vec![axis.clone(), axis]).unwrap();
        let samp = ConnectionForm::sampled_from(&aff, grid).unwrap();
        let x = v2(0.13, -0.61);
        let v = v2(0.4, 0.9);
        // Multilinear interpolation is exact on affine data.
        assert!((samp.eval(&x, &v).unwrap().matrix() - aff.eval(&x, &v).unwrap().matrix()).amax() < 1e-13);
        let (e1, e2) = (v2(1.0, 0.0), v2(0.0, 1.0));
        let ks = samp.curvature(&x, &e1, &e2).unwrap();
        let ka = aff.curvature(&x, &e1, &e2).unwrap();
        assert!((ks.matrix() - ka.matrix()).amax() < 1e-12);
        assert!(matches!(samp.eval(&v2(1.5, 0.0), &v), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn restriction_drops_vertical_direction() {
        let g = Arc::new(ConnectionForm::constant(vec![so3_generator(0), so3_generator(1)]).unwrap());
        let r = g.restrict_to_boundary().unwrap();
        let out = r.eval(&Vector::from_vec(vec![0.4]), &Vector::from_vec(vec![2.0])).unwrap();
        assert!((out.matrix() - so3_generator(0).matrix() * 2.0).amax() < 1e-15);
        assert_eq!(expm(&out).dim(), 3);
    }

    #[test]
    fn commutator_defect_constant_field_exact() {
        let a = ConnectionForm::abelian(VectorPotential::flux(2, 0.9)).unwrap();
        let u = Field::constant(2, vec![1.0, 0.0]);
        let d = commutator_defect(&u, &a, &v2(0.2, 0.3), &v2(1.0, 0.0), &v2(0.0, 1.0), 1e-3).unwrap();
        assert!(d < 1e-10, "{d}");
    }
}
