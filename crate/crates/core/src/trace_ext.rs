//! Trace and extension operators between the half-space and its boundary, and
//! the two pairs of inequality reports that relate their energies.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{curvature_sup_norm, ConnectionForm, Field, Support};
use crate::error::{Error, Result};
use crate::grid::HalfSpaceGrid;
use crate::lie::Vector;
use crate::numerics::{det_sum, simpson_weights};
use crate::sobolev::{
    gagliardo_seminorm, unit_sphere_area, weighted_w1p_energy, BoundaryField, GagliardoParams, TransportCache,
};
use crate::transport::transport_segment;

/// Slack factor applied to the measured curvature sup-norm when choosing β automatically.
pub const BETA_SLACK: f64 = 1.05;
/// Sample count for the curvature sup-norm used in β checks.
pub const BETA_SUP_SAMPLES: usize = 32;

/// Normalized bump `c_n exp(−1/(1 − |y|²))` on the unit ball of ℝ^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mollifier {
    pub n: usize,
    pub normalization: f64,
}

fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl Mollifier {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("mollifier dimension must be at least 1"));
        }
        // ∫ φ = ω_{n−1} ∫_0^1 r^{n−1} e^{−1/(1−r²)} dr; the integrand is flat at both ends.
        let intervals = 4096;
        let w = simpson_weights(intervals)?;
        let radial: f64 = w
            .iter()
            .enumerate()
            .map(|(k, wk)| {
                let r = k as f64 / intervals as f64;
                wk * r.powi(n as i32 - 1) * bump_profile(r * r)
            })
            .sum();
        Ok(Mollifier {
            n,
            normalization: 1.0 / (unit_sphere_area(n) * radial),
        })
    }

    pub fn value(&self, y: &Vector) -> f64 {
        self.normalization * bump_profile(y.norm_squared())
    }

    /// `φ_t(y) = t^{−n} φ(y / t)`.
    pub fn scaled(&self, t: f64, y: &Vector) -> f64 {
        self.normalization * bump_profile(y.norm_squared() / (t * t)) / t.powi(self.n as i32)
    }
}

#[derive(Debug, Clone)]
pub struct ExtensionConfig {
    pub beta: f64,
    pub params: GagliardoParams,
    pub grid: HalfSpaceGrid,
    pub steps: usize,
}

/// `1.05 × sup‖K‖` over `grid`'s box, raised to `1/R²` when a local radius is given.
pub fn auto_beta(gamma: &ConnectionForm, grid: &HalfSpaceGrid, local_radius: Option<f64>) -> Result<f64> {
    let sup = curvature_sup_norm(gamma, &grid.region(), BETA_SUP_SAMPLES)?;
    let mut beta = BETA_SLACK * sup;
    if let Some(r) = local_radius {
        beta = beta.max(BETA_SLACK * (sup + 1.0 / (r * r)));
    }
    Ok(beta)
}

fn check_beta(gamma: &ConnectionForm, grid: &HalfSpaceGrid, beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("curvature budget must be finite and nonnegative, got {beta}")));
    }
    if gamma.is_zero() {
        return Ok(());
    }
    let sup = curvature_sup_norm(gamma, &grid.region(), BETA_SUP_SAMPLES)?;
    if beta < sup * (1.0 - 1e-6) {
        return Err(Error::invalid(format!(
            "curvature budget {beta} is below the measured curvature sup-norm {sup}"
        )));
    }
    Ok(())
}

/// `x ↦ U(x, 0)`.
pub fn trace(u: Arc<Field>) -> Result<BoundaryField> {
    Ok(BoundaryField::new(Field::trace_of(u)?))
}

/// Node values of an extension on the half-space grid.
#[derive(Debug, Clone)]
pub struct Extension {
    pub grid: HalfSpaceGrid,
    pub dim_fiber: usize,
    /// Node-major values on `grid.tensor()`, `dim_fiber` per node.
    pub data: Vec<f64>,
    pub boundary: Vec<f64>,
    field: Arc<Field>,
}

impl Extension {
    pub fn field(&self) -> Arc<Field> {
        Arc::clone(&self.field)
    }

    fn layer_rows(&self, j: usize) -> impl Iterator<Item = &[f64]> + '_ {
        let nz = self.grid.spec.n_vert + 1;
        let m = self.dim_fiber;
        let lateral = self.boundary.len() / m;
        (0..lateral).map(move |a| {
            let node = a * nz + j;
            &self.data[node * m..(node + 1) * m]
        })
    }

    /// `max_x ‖U(x, z_j) − u(x)‖` over lateral nodes.
    pub fn layer_error(&self, j: usize) -> f64 {
        let m = self.dim_fiber;
        self.layer_rows(j)
            .zip(self.boundary.chunks(m))
            .map(|(row, u)| row.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Height of the first interior layer.
    pub fn first_layer_height(&self) -> f64 {
        self.grid.vertical_axis()[1]
    }
}

/// Transported mollification with Gaussian damping:
/// `U(z′, t) = e^{−βt²} R(z, z′) Σ_k w_k R∥(z′, x_k) u(x_k)` where the weights are
/// `φ_t(z′ − x_k)` over boundary nodes normalized to sum 1. Below one lateral cell
/// the transported value `R(z, z′) u(z′)` is used, and the boundary row is `u`.
pub fn extend(u: &BoundaryField, gamma: &Arc<ConnectionForm>, cfg: &ExtensionConfig) -> Result<Extension> {
    let grid = &cfg.grid;
    let n = grid.n;
    let m = u.field().dim_fiber();
    if gamma.dim_domain() != n + 1 || gamma.dim_fiber() != m {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: gamma.dim_domain(),
        });
    }
    u.validate_on(grid)?;
    check_beta(gamma, grid, cfg.beta)?;
    let h = grid.lateral_step();
    let height = grid.height;
    let margin = -grid.half_width + 2.0 * h;
    if let Support::Bounded(b) = u.field().support() {
        for k in 0..n {
            if b.lo[k] - height < margin - 1e-12 || b.hi[k] + height > -margin + 1e-12 {
                let mut point = b.hi.clone();
                point[k] = if b.lo[k] - height < margin { b.lo[k] - height } else { b.hi[k] + height };
                return Err(Error::OutOfDomain { point });
            }
        }
    }

    let boundary_grid = grid.boundary_tensor();
    let nodes: Vec<Vector> = (0..boundary_grid.len()).map(|a| boundary_grid.node(a)).collect();
    let values: Vec<Vector> = nodes.par_iter().map(|x| u.value(x)).collect::<Result<_>>()?;
    let active: Vec<bool> = values.iter().map(|v| v.amax() > 0.0).collect();
    let boundary: Vec<f64> = values.iter().flat_map(|v| v.iter().copied()).collect();

    let gamma_b = gamma.restrict_to_boundary()?;
    let reach = height * (1.0 + 1e-12);
    let cache = TransportCache::build(&gamma_b, &nodes, cfg.steps, |i, j| {
        (active[i] || active[j]) && (&nodes[i] - &nodes[j]).norm() < reach
    })?;
    let mollifier = Mollifier::new(n)?;
    let heights = grid.vertical_axis();
    let nz = heights.len();
    let total = nodes.len() * nz;

    let rows: Vec<Result<Vector>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let (a, j) = (flat / nz, flat % nz);
            if j == 0 {
                return Ok(values[a].clone());
            }
            let t = heights[j];
            let inner = if t < h {
                values[a].clone()
            } else {
                let mut acc = Vector::zeros(m);
                let mut weight_sum = 0.0;
                for (k, x) in nodes.iter().enumerate() {
                    let diff = &nodes[a] - x;
                    let w = mollifier.scaled(t, &diff);
                    if w == 0.0 {
                        continue;
                    }
                    weight_sum += w;
                    if !active[k] {
                        continue;
                    }
                    let r = if k == a {
                        None
                    } else {
                        Some(cache.get(a, k).ok_or_else(|| Error::invalid("extension transport cache miss"))?)
                    };
                    let transported = match r {
                        Some(r) => r.apply(&values[k]),
                        None => values[k].clone(),
                    };
                    acc += transported * w;
                }
                if weight_sum > 0.0 {
                    acc / weight_sum
                } else {
                    acc
                }
            };
            if inner.amax() == 0.0 {
                return Ok(inner);
            }
            let mut z = Vector::zeros(n + 1);
            z.rows_mut(0, n).copy_from(&nodes[a]);
            let base = z.clone();
            z[n] = t;
            let vertical = transport_segment(gamma, &z, &base, cfg.steps)?;
            Ok(vertical.apply(&inner) * (-cfg.beta * t * t).exp())
        })
        .collect();
    let mut data = Vec::with_capacity(total * m);
    for r in rows {
        data.extend(r?.iter());
    }
    let field = Arc::new(Field::sampled(grid.tensor(), m, data.clone())?);
    Ok(Extension {
        grid: grid.clone(),
        dim_fiber: m,
        data,
        boundary,
        field,
    })
}

/// Left side, right side and their ratio for one inequality at one grid level.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub n: usize,
    pub m: usize,
    pub s: f64,
    pub p: f64,
    pub beta: f64,
    pub grid: usize,
}

impl InequalityReport {
    fn new(label: &str, lhs: f64, rhs: f64, n: usize, m: usize, params: GagliardoParams, beta: f64, grid: usize) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        InequalityReport {
            label: label.to_string(),
            lhs,
            rhs,
            ratio,
            n,
            m,
            s: params.s,
            p: params.p,
            beta,
            grid,
        }
    }
}

/// `Σ ‖u(cᵢ)‖^p hⁿ` over boundary cell centers.
pub fn boundary_lp(u: &BoundaryField, grid: &HalfSpaceGrid, p: f64) -> Result<f64> {
    let centers = grid.lateral_centers();
    let vals: Vec<f64> = centers
        .par_iter()
        .map(|c| u.value(c).map(|v| v.norm().powf(p)))
        .collect::<Result<_>>()?;
    Ok(det_sum(vals.len(), |i| vals[i]) * grid.lateral_cell_volume())
}

/// Trace estimates for a bulk field `U`:
/// `|U(·,0)|^p_{s,p} ≤ C ∫(‖D_Γ U‖^p + β^{p/2}‖U‖^p) z^α` and
/// `‖U(·,0)‖_p^p ≤ C (∫‖D_Γ U‖^p z^α)^{1−s} (∫‖U‖^p z^α)^s`.
pub fn trace_inequality_report(
    u: Arc<Field>,
    gamma: &Arc<ConnectionForm>,
    params: GagliardoParams,
    beta: f64,
    grid: &HalfSpaceGrid,
    steps: usize,
) -> Result<[InequalityReport; 2]> {
    let p = params.p;
    let m = u.dim_fiber();
    let energy = weighted_w1p_energy(&u, gamma, p, params.alpha(), grid)?;
    let tr = trace(u)?;
    let gamma_b = gamma.restrict_to_boundary()?;
    let semi = gagliardo_seminorm(&tr, &gamma_b, params, grid, steps)?;
    let lp = boundary_lp(&tr, grid, p)?;
    let nl = grid.spec.n_lat;
    Ok([
        InequalityReport::new(
            "trace-seminorm",
            semi.corrected(),
            energy.grad + beta.powf(p / 2.0) * energy.mass,
            grid.n,
            m,
            params,
            beta,
            nl,
        ),
        InequalityReport::new(
            "trace-lp",
            lp,
            energy.grad.powf(1.0 - params.s) * energy.mass.powf(params.s),
            grid.n,
            m,
            params,
            beta,
            nl,
        ),
    ])
}

/// Extension estimates for `U = extend(u)`:
/// `∫‖D_Γ U‖^p z^α ≤ C(|u|^p_{s,p} + β^{sp/2}‖u‖_p^p)` and
/// `∫‖U‖^p z^α ≤ C β^{−(1−s)p/2} ‖u‖_p^p`.
pub fn extension_inequality_report(
    u: &BoundaryField,
    gamma: &Arc<ConnectionForm>,
    cfg: &ExtensionConfig,
) -> Result<([InequalityReport; 2], Extension)> {
    if !(cfg.beta > 0.0) {
        return Err(Error::invalid("extension estimates need a positive curvature budget"));
    }
    let params = cfg.params;
    let p = params.p;
    let grid = &cfg.grid;
    let ext = extend(u, gamma, cfg)?;
    let energy = weighted_w1p_energy(&ext.field(), gamma, p, params.alpha(), grid)?;
    let gamma_b = gamma.restrict_to_boundary()?;
    let semi = gagliardo_seminorm(u, &gamma_b, params, grid, cfg.steps)?;
    let lp = boundary_lp(u, grid, p)?;
    let m = u.field().dim_fiber();
    let nl = grid.spec.n_lat;
    let beta = cfg.beta;
    Ok((
        [
            InequalityReport::new(
                "extension-gradient",
                energy.grad,
                semi.corrected() + beta.powf(params.s * p / 2.0) * lp,
                grid.n,
                m,
                params,
                beta,
                nl,
            ),
            InequalityReport::new(
                "extension-mass",
                energy.mass,
                beta.powf(-(1.0 - params.s) * p / 2.0) * lp,
                grid.n,
                m,
                params,
                beta,
                nl,
            ),
        ],
        ext,
    ))
}
