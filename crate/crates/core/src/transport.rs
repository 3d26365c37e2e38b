//! Parallel transport along paths, its parameter derivative, holonomy defects
//! and the covariant fundamental theorem of calculus.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::connection::{covariant_derivative, curvature_sup_over, ConnectionForm, Field, GaugeField};
use crate::error::{Error, Result};
use crate::lie::{op_norm, polar_retract, Matrix, OrthoOp, Vector};
use crate::numerics::{central_diff4, halton, simpson_weights, BoxRegion};

/// Minimum number of integration steps.
pub const MIN_STEPS: usize = 8;
/// Relative slack on inequality checks that involve quadrature or differencing.
pub const EPS_DISC: f64 = 0.05;
/// Absolute slack added to every inequality check.
pub const ABS_SLACK: f64 = 1e-9;
/// Halton samples used when estimating the curvature sup-norm over a triangle.
pub const TRIANGLE_SUP_SAMPLES: usize = 64;

pub type CurveFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum PathKind {
    /// `γ(t) = (1−t)x + t y`.
    Segment { x: Vector, y: Vector },
    /// Uniformly parameterized polygon through the nodes.
    PiecewiseLinear(Vec<Vector>),
    Analytic { position: CurveFn, velocity: CurveFn },
}

impl fmt::Debug for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathKind::Segment { x, y } => f.debug_struct("Segment").field("x", x).field("y", y).finish(),
            PathKind::PiecewiseLinear(n) => f.debug_tuple("PiecewiseLinear").field(n).finish(),
            PathKind::Analytic { .. } => write!(f, "Analytic(..)"),
        }
    }
}

/// C¹ (piecewise C¹ for polygons) curve `[0, 1] → ℝ^d`.
#[derive(Debug, Clone)]
pub struct Path {
    dim: usize,
    kind: PathKind,
}

impl Path {
    pub fn segment(x: Vector, y: Vector) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(Path {
            dim: x.len(),
            kind: PathKind::Segment { x, y },
        })
    }

    pub fn piecewise_linear(nodes: Vec<Vector>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a polygonal path needs at least two nodes"));
        }
        let d = nodes[0].len();
        if let Some(bad) = nodes.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Path {
            dim: d,
            kind: PathKind::PiecewiseLinear(nodes),
        })
    }

    pub fn analytic(dim: usize, position: CurveFn, velocity: CurveFn) -> Self {
        Path {
            dim,
            kind: PathKind::Analytic { position, velocity },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PathKind {
        &self.kind
    }

    /// Number of smooth pieces.
    pub fn pieces(&self) -> usize {
        match &self.kind {
            PathKind::PiecewiseLinear(n) => n.len() - 1,
            _ => 1,
        }
    }

    /// Position and velocity at local parameter `tau ∈ [0, 1]` of smooth piece `k`.
    fn piece_eval(&self, k: usize, tau: f64) -> (Vector, Vector) {
        match &self.kind {
            PathKind::Segment { x, y } => (x * (1.0 - tau) + y * tau, y - x),
            PathKind::PiecewiseLinear(nodes) => {
                let k_total = (nodes.len() - 1) as f64;
                let (a, b) = (&nodes[k], &nodes[k + 1]);
                (a * (1.0 - tau) + b * tau, (b - a) * k_total)
            }
            PathKind::Analytic { position, velocity } => (position(tau), velocity(tau)),
        }
    }

    pub fn position(&self, t: f64) -> Vector {
        let (k, tau) = self.locate(t);
        self.piece_eval(k, tau).0
    }

    /// Velocity; at polygon corners the incoming piece is used.
    pub fn velocity(&self, t: f64) -> Vector {
        let (k, tau) = self.locate(t);
        self.piece_eval(k, tau).1
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let p = self.pieces();
        if p == 1 {
            return (0, t);
        }
        let scaled = (t.clamp(0.0, 1.0) * p as f64).min(p as f64);
        let k = (scaled.ceil() as usize).saturating_sub(1).min(p - 1);
        (k, scaled - k as f64)
    }
}

/// Transport samples in ascending `t`; the last sample is `(1, I)`.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub samples: Vec<(f64, OrthoOp)>,
    pub steps: usize,
    pub ortho_defect: f64,
    /// Steps per smooth piece of the path.
    pub steps_per_piece: usize,
}

impl TransportResult {
    /// `Pt(0)`.
    pub fn initial(&self) -> &OrthoOp {
        &self.samples[0].1
    }
}

fn connection_rate(gamma: &ConnectionForm, path: &Path, k: usize, tau: f64) -> Result<Matrix> {
    let (x, v) = path.piece_eval(k, tau);
    Ok(gamma.eval(&x, &v)?.into_matrix())
}

/// Solves `P′ + Γ(γ)[γ̇] P = 0`, `P(1) = I`, backward with classical RK4 and a
/// polar retraction after every step. Each smooth piece gets `ceil(steps / pieces)` steps.
pub fn transport_path(gamma: &ConnectionForm, path: &Path, steps: usize) -> Result<TransportResult> {
    if steps < MIN_STEPS {
        return Err(Error::invalid(format!("transport needs at least {MIN_STEPS} steps, got {steps}")));
    }
    if path.dim() != gamma.dim_domain() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim_domain(),
            got: path.dim(),
        });
    }
    let m = gamma.dim_fiber();
    let pieces = path.pieces();
    let per_piece = steps.div_ceil(pieces);
    let total = per_piece * pieces;
    let h_global = 1.0 / total as f64;
    let h_local = 1.0 / per_piece as f64;

    let mut samples = Vec::with_capacity(total + 1);
    let mut p = Matrix::identity(m, m);
    let mut max_defect: f64 = 0.0;
    samples.push((1.0, OrthoOp::identity(m)));
    if gamma.is_zero() {
        for i in (0..total).rev() {
            samples.push((i as f64 * h_global, OrthoOp::identity(m)));
        }
        samples.reverse();
        return Ok(TransportResult {
            samples,
            steps: total,
            ortho_defect: 0.0,
            steps_per_piece: per_piece,
        });
    }
    for k in (0..pieces).rev() {
        let mut a_hi = connection_rate(gamma, path, k, 1.0)?;
        for j in (0..per_piece).rev() {
            let tau_mid = (j as f64 + 0.5) * h_local;
            let tau_lo = j as f64 * h_local;
            let a_mid = connection_rate(gamma, path, k, tau_mid)?;
            let a_lo = connection_rate(gamma, path, k, tau_lo)?;
            let h = h_global;
            let k1 = -(&a_hi * &p);
            let k2 = -(&a_mid * (&p - &k1 * (0.5 * h)));
            let k3 = -(&a_mid * (&p - &k2 * (0.5 * h)));
            let k4 = -(&a_lo * (&p - &k3 * h));
            let next = &p - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let t_global = (k as f64 + tau_lo) / pieces as f64;
            let q = polar_retract(&next).map_err(|_| Error::IntegrationDiverged { t: t_global })?;
            max_defect = max_defect.max(q.ortho_defect());
            p = q.matrix().clone();
            samples.push((t_global, q));
            a_hi = a_lo;
        }
    }
    samples.reverse();
    Ok(TransportResult {
        samples,
        steps: total,
        ortho_defect: max_defect,
        steps_per_piece: per_piece,
    })
}

/// `R(x, y)`: transport along `t ↦ (1−t)x + t y`, evaluated at `t = 0`.
pub fn transport_segment(gamma: &ConnectionForm, x: &Vector, y: &Vector, steps: usize) -> Result<OrthoOp> {
    if gamma.is_zero() || x == y {
        if steps < MIN_STEPS {
            return Err(Error::invalid(format!("transport needs at least {MIN_STEPS} steps, got {steps}")));
        }
        gamma.eval(x, &Vector::zeros(x.len()))?;
        return Ok(OrthoOp::identity(gamma.dim_fiber()));
    }
    let path = Path::segment(x.clone(), y.clone())?;
    Ok(transport_path(gamma, &path, steps)?.samples.swap_remove(0).1)
}

/// Right-hand side of the covariant fundamental theorem of calculus.
#[derive(Debug, Clone, Serialize)]
pub struct FtcResult {
    pub reconstructed: Vec<f64>,
    pub target: Vec<f64>,
    pub defect: f64,
}

/// `Pt(0)⁻¹ U(γ(0)) + ∫ Pt(t)⁻¹ D_Γ U(γ(t))[γ̇(t)] dt`, integrated by composite
/// Simpson on the transport grid, compared with `U(γ(1))`.
pub fn ftc_reconstruct(gamma: &ConnectionForm, u: &Field, path: &Path, steps: usize) -> Result<FtcResult> {
    let res = transport_path(gamma, path, steps)?;
    let spp = res.steps_per_piece;
    let weights = simpson_weights(spp)?;
    let pieces = path.pieces();
    let start = path.position(0.0);
    let mut total = res.initial().matrix().transpose() * u.value(&start)?;
    for k in 0..pieces {
        let mut integral = Vector::zeros(u.dim_fiber());
        for (j, w) in weights.iter().enumerate() {
            let tau = j as f64 / spp as f64;
            let (x, v) = path.piece_eval(k, tau);
            let du = covariant_derivative(u, gamma, &x)? * v;
            let p = res.samples[k * spp + j].1.matrix();
            integral += p.transpose() * du * *w;
        }
        // Each piece is traversed in 1/pieces of global time.
        total += integral / pieces as f64;
    }
    let target = u.value(&path.position(1.0))?;
    Ok(FtcResult {
        defect: (&total - &target).norm(),
        reconstructed: total.iter().copied().collect(),
        target: target.iter().copied().collect(),
    })
}

pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum HomotopyKind {
    /// `γ_s(t) = (1−t)(a + s·da) + t(b + s·db)`.
    SegmentFamily {
        a: Vector,
        da: Vector,
        b: Vector,
        db: Vector,
    },
    Analytic {
        position: SurfaceFn,
        d_dt: SurfaceFn,
        d_ds: SurfaceFn,
    },
}

impl fmt::Debug for HomotopyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HomotopyKind::SegmentFamily { a, da, b, db } => f
                .debug_struct("SegmentFamily")
                .field("a", a)
                .field("da", da)
                .field("b", b)
                .field("db", db)
                .finish(),
            HomotopyKind::Analytic { .. } => write!(f, "Analytic(..)"),
        }
    }
}

/// C¹ family of paths `γ_s = H(·, s)` for `s` in the open interval `range`.
#[derive(Debug, Clone)]
pub struct Homotopy {
    dim: usize,
    kind: HomotopyKind,
    range: (f64, f64),
}

impl Homotopy {
    pub fn segment_family(a: Vector, da: Vector, b: Vector, db: Vector, range: (f64, f64)) -> Result<Self> {
        let d = a.len();
        for v in [&da, &b, &db] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Self::check_range(range)?;
        Ok(Homotopy {
            dim: d,
            kind: HomotopyKind::SegmentFamily { a, da, b, db },
            range,
        })
    }

    pub fn analytic(dim: usize, position: SurfaceFn, d_dt: SurfaceFn, d_ds: SurfaceFn, range: (f64, f64)) -> Result<Self> {
        Self::check_range(range)?;
        Ok(Homotopy {
            dim,
            kind: HomotopyKind::Analytic { position, d_dt, d_ds },
            range,
        })
    }

    fn check_range(range: (f64, f64)) -> Result<()> {
        if !(range.1 > range.0) {
            return Err(Error::invalid("homotopy parameter range must be a nonempty interval"));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    /// `H(t, s)`, `∂_t H`, `∂_s H`.
    pub fn eval(&self, t: f64, s: f64) -> (Vector, Vector, Vector) {
        match &self.kind {
            HomotopyKind::SegmentFamily { a, da, b, db } => {
                let start = a + da * s;
                let end = b + db * s;
                (&start * (1.0 - t) + &end * t, end - start, da * (1.0 - t) + db * t)
            }
            HomotopyKind::Analytic { position, d_dt, d_ds } => (position(t, s), d_dt(t, s), d_ds(t, s)),
        }
    }

    pub fn slice(&self, s: f64) -> Result<Path> {
        match &self.kind {
            HomotopyKind::SegmentFamily { a, da, b, db } => Path::segment(a + da * s, b + db * s),
            HomotopyKind::Analytic { position, d_dt, .. } => {
                let (p, v) = (Arc::clone(position), Arc::clone(d_dt));
                Ok(Path::analytic(
                    self.dim,
                    Arc::new(move |t| p(t, s)),
                    Arc::new(move |t| v(t, s)),
                ))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParameterDerivative {
    pub lhs: Matrix,
    pub rhs: Matrix,
    pub bound: f64,
}

impl ParameterDerivative {
    pub fn lhs_norm(&self) -> f64 {
        op_norm(&self.lhs)
    }

    pub fn holds(&self) -> bool {
        self.lhs_norm() <= self.bound * (1.0 + EPS_DISC) + ABS_SLACK
    }
}

/// Both sides of the parameter-derivative identity for `Pt_{γ_s}(0)`, plus the
/// scalar bound `∫ ‖K(γ_s)[∂_sγ_s, γ̇_s]‖ dt`. The s-derivative uses a
/// fourth-order central difference with step `1e-4·|J|`.
pub fn transport_parameter_derivative(
    gamma: &ConnectionForm,
    homotopy: &Homotopy,
    s: f64,
    steps: usize,
) -> Result<ParameterDerivative> {
    let (lo, hi) = homotopy.range;
    let h_s = 1e-4 * (hi - lo);
    if !(s - 2.0 * h_s > lo && s + 2.0 * h_s < hi) {
        return Err(Error::StencilOutOfRange { point: vec![s] });
    }
    let steps = steps + steps % 2;
    let m = gamma.dim_fiber();
    let base = transport_path(gamma, &homotopy.slice(s)?, steps)?;
    let p0 = base.initial().matrix().clone();
    let dp = central_diff4(h_s, |ds| {
        let r = transport_path(gamma, &homotopy.slice(s + ds)?, steps)?;
        Ok(Vector::from_column_slice(r.initial().matrix().as_slice()))
    })?;
    let dp = Matrix::from_column_slice(m, m, dp.as_slice());
    let (x0, _, ds0) = homotopy.eval(0.0, s);
    let (x1, _, ds1) = homotopy.eval(1.0, s);
    let lhs = dp + gamma.eval(&x0, &ds0)?.matrix() * &p0 - &p0 * gamma.eval(&x1, &ds1)?.matrix();

    let weights = simpson_weights(base.steps)?;
    let mut rhs = Matrix::zeros(m, m);
    let mut bound = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let (t, pt) = &base.samples[j];
        let (x, dt, ds) = homotopy.eval(*t, s);
        let k = gamma.curvature(&x, &ds, &dt)?;
        let pt = pt.matrix();
        rhs += &p0 * pt.transpose() * k.matrix() * pt * *w;
        bound += k.op_norm() * *w;
    }
    Ok(ParameterDerivative { lhs, rhs, bound })
}

/// Area of the triangle with vertices x, y, z in ℝ^d.
pub fn triangle_area(x: &Vector, y: &Vector, z: &Vector) -> f64 {
    let u = y - x;
    let v = z - x;
    let g = u.norm_squared() * v.norm_squared() - u.dot(&v).powi(2);
    0.5 * g.max(0.0).sqrt()
}

/// Orthonormal basis of the triangle's plane, if it is nondegenerate.
fn triangle_plane(x: &Vector, y: &Vector, z: &Vector) -> Option<(Vector, Vector)> {
    let u = y - x;
    let nu = u.norm();
    if nu == 0.0 {
        return None;
    }
    let e1 = u / nu;
    let v = z - x;
    let w = &v - &e1 * e1.dot(&v);
    let nw = w.norm();
    if nw <= 1e-12 * v.norm().max(1.0) {
        return None;
    }
    Some((e1, w / nw))
}

/// Curvature sup-norm estimate over the bounding box of a triangle: its vertices,
/// Halton points of the box, coordinate pairs, random pairs and the in-plane pair.
pub fn triangle_curvature_sup(gamma: &ConnectionForm, x: &Vector, y: &Vector, z: &Vector, samples: usize) -> Result<f64> {
    let region = BoxRegion::bounding(&[x, y, z]);
    let d = region.dim();
    let mut points = vec![x.clone(), y.clone(), z.clone()];
    points.extend((0..samples as u64).map(|i| region.from_unit(&halton(i, d))));
    let extra: Vec<(Vector, Vector)> = triangle_plane(x, y, z).into_iter().collect();
    curvature_sup_over(gamma, &points, &extra)
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    pub defect: f64,
    pub bound: f64,
    pub sup_norm: f64,
    pub area: f64,
    pub holds: bool,
}

/// `‖I − R(x,y)R(y,z)R(z,x)‖` against `sup‖K‖ · area`.
pub fn holonomy_triangle(gamma: &ConnectionForm, x: &Vector, y: &Vector, z: &Vector, steps: usize) -> Result<HolonomyReport> {
    let m = gamma.dim_fiber();
    let rxy = transport_segment(gamma, x, y, steps)?;
    let ryz = transport_segment(gamma, y, z, steps)?;
    let rzx = transport_segment(gamma, z, x, steps)?;
    let loop_op = rxy.matrix() * ryz.matrix() * rzx.matrix();
    let defect = op_norm(&(Matrix::identity(m, m) - loop_op));
    let area = triangle_area(x, y, z);
    let sup_norm = if area > 0.0 {
        triangle_curvature_sup(gamma, x, y, z, TRIANGLE_SUP_SAMPLES)?
    } else {
        0.0
    };
    let bound = sup_norm * area;
    Ok(HolonomyReport {
        defect,
        bound,
        sup_norm,
        area,
        holds: defect <= bound * (1.0 + EPS_DISC) + ABS_SLACK,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TriangleReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `‖U(x) − R(x,y)U(y)‖` against the two-leg estimate through `z` plus the
/// holonomy term `‖U(z)‖ min{2, sup‖K‖·area}`.
pub fn triangle_difference_bound(
    gamma: &ConnectionForm,
    u: &Field,
    x: &Vector,
    y: &Vector,
    z: &Vector,
    steps: usize,
) -> Result<TriangleReport> {
    let (ux, uy, uz) = (u.value(x)?, u.value(y)?, u.value(z)?);
    let rxy = transport_segment(gamma, x, y, steps)?;
    let rxz = transport_segment(gamma, x, z, steps)?;
    let ryz = transport_segment(gamma, y, z, steps)?;
    let lhs = (&ux - rxy.apply(&uy)).norm();
    let area = triangle_area(x, y, z);
    let sup = if area > 0.0 {
        triangle_curvature_sup(gamma, x, y, z, TRIANGLE_SUP_SAMPLES)?
    } else {
        0.0
    };
    let rhs = (&ux - rxz.apply(&uz)).norm() + (&uy - ryz.apply(&uz)).norm() + uz.norm() * (sup * area).min(2.0);
    Ok(TriangleReport {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + EPS_DISC) + ABS_SLACK,
    })
}

/// `max_t ‖Pt^{Γ′}(t) − φ(γ(t)) Pt^Γ(t) φ(γ(1))⁻¹‖`.
pub fn transport_gauge_defect(
    gamma: &ConnectionForm,
    transformed: &ConnectionForm,
    gauge: &GaugeField,
    path: &Path,
    steps: usize,
) -> Result<f64> {
    let a = transport_path(gamma, path, steps)?;
    let b = transport_path(transformed, path, steps)?;
    let phi_end = gauge.value(&path.position(1.0))?;
    let mut worst: f64 = 0.0;
    for ((t, pa), (_, pb)) in a.samples.iter().zip(&b.samples) {
        let phi = gauge.value(&path.position(*t))?;
        let expected = phi.matrix() * pa.matrix() * phi_end.matrix().transpose();
        worst = worst.max(op_norm(&(pb.matrix() - expected)));
    }
    Ok(worst)
}

/// `‖R^{Γ′}(x,y)φ(y) − φ(x)R^Γ(x,y)‖`.
pub fn segment_gauge_defect(
    gamma: &ConnectionForm,
    transformed: &ConnectionForm,
    gauge: &GaugeField,
    x: &Vector,
    y: &Vector,
    steps: usize,
) -> Result<f64> {
    let r = transport_segment(gamma, x, y, steps)?;
    let rp = transport_segment(transformed, x, y, steps)?;
    let lhs = rp.matrix() * gauge.value(y)?.matrix();
    let rhs = gauge.value(x)?.matrix() * r.matrix();
    Ok(op_norm(&(lhs - rhs)))
}

/// `| ‖φU(x) − R^{Γ′}(x,y)φU(y)‖ − ‖U(x) − R^Γ(x,y)U(y)‖ |`.
pub fn difference_gauge_defect(
    gamma: &ConnectionForm,
    transformed: &ConnectionForm,
    gauge: &GaugeField,
    u: &Field,
    x: &Vector,
    y: &Vector,
    steps: usize,
) -> Result<f64> {
    let (ux, uy) = (u.value(x)?, u.value(y)?);
    let (px, py) = (gauge.value(x)?, gauge.value(y)?);
    let r = transport_segment(gamma, x, y, steps)?;
    let rp = transport_segment(transformed, x, y, steps)?;
    let plain = (&ux - r.apply(&uy)).norm();
    let gauged = (px.apply(&ux) - rp.apply(&py.apply(&uy))).norm();
    Ok((plain - gauged).abs())
}
