//! Weighted covariant Sobolev energies on the half-space, the covariant
//! Gagliardo seminorm on the boundary and the diamagnetic check.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{covariant_derivative, ConnectionForm, Field, Support};
use crate::error::{Error, Result};
use crate::grid::HalfSpaceGrid;
use crate::lie::{hs_norm, op_norm, Matrix, OrthoOp, Vector};
use crate::numerics::{central_diff4, det_sum, try_det_sum, BoxRegion};
use crate::transport::transport_segment;

/// Angular nodes for the exterior-tail integral in two boundary dimensions.
pub const TAIL_ANGLES: usize = 512;
/// Below this norm a field value counts as zero for the diamagnetic check.
pub const DIAMAGNETIC_FLOOR: f64 = 1e-8;

/// Fractional order `s ∈ (0,1)` and integrability `p ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GagliardoParams {
    pub s: f64,
    pub p: f64,
}

impl GagliardoParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::invalid(format!("integrability exponent must be in [1, ∞), got {p}")));
        }
        let alpha = (1.0 - s) * p - 1.0;
        if !(s > 0.0 && s < 1.0) || !(alpha > -1.0 && alpha < p - 1.0) {
            return Err(Error::WeightOutOfRange { alpha, upper: p - 1.0 });
        }
        Ok(GagliardoParams { s, p })
    }

    /// The critical order `s = 1 − 1/p`, where the weight exponent vanishes.
    pub fn critical(p: f64) -> Result<Self> {
        GagliardoParams::new(1.0 - 1.0 / p, p)
    }

    /// Weight exponent `α = (1 − s)p − 1`.
    pub fn alpha(&self) -> f64 {
        (1.0 - self.s) * self.p - 1.0
    }

    /// Kernel exponent `n + sp`.
    pub fn kernel_exponent(&self, n: usize) -> f64 {
        n as f64 + self.s * self.p
    }
}

pub fn check_weight(p: f64, alpha: f64) -> Result<()> {
    if !(alpha > -1.0 && alpha < p - 1.0) {
        return Err(Error::WeightOutOfRange { alpha, upper: p - 1.0 });
    }
    Ok(())
}

fn lateral_inside(support: &Support, region: &BoxRegion, margin: f64) -> Result<()> {
    match support {
        Support::Empty => Ok(()),
        Support::Unbounded => Err(Error::UnsupportedField(
            "field support is not known to be bounded".into(),
        )),
        Support::Bounded(b) => {
            for k in 0..region.dim() {
                if b.lo[k] < region.lo[k] + margin - 1e-12 || b.hi[k] > region.hi[k] - margin + 1e-12 {
                    return Err(Error::UnsupportedField(format!(
                        "support [{:.3}, {:.3}] on axis {k} leaves [{:.3}, {:.3}]",
                        b.lo[k],
                        b.hi[k],
                        region.lo[k] + margin,
                        region.hi[k] - margin
                    )));
                }
            }
            Ok(())
        }
    }
}

/// Field on the boundary `ℝ^n` with compact support.
#[derive(Debug, Clone)]
pub struct BoundaryField(Field);

impl BoundaryField {
    pub fn new(field: Field) -> Self {
        BoundaryField(field)
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim_domain()
    }

    /// Support must sit inside the lateral box minus a two-cell collar.
    pub fn validate_on(&self, grid: &HalfSpaceGrid) -> Result<()> {
        if self.dim() != grid.n {
            return Err(Error::DimensionMismatch {
                expected: grid.n,
                got: self.dim(),
            });
        }
        lateral_inside(&self.0.support(), &grid.lateral_region(), 2.0 * grid.lateral_step())
    }

    pub fn value(&self, x: &Vector) -> Result<Vector> {
        self.0.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    /// `∫ ‖D_Γ U‖^p z^α`.
    pub grad: f64,
    /// `∫ ‖U‖^p z^α`.
    pub mass: f64,
}

/// Midpoint rule on the graded half-space mesh; the vertical weight is
/// integrated exactly over each cell, so `z = 0` is never evaluated.
pub fn weighted_w1p_energy(u: &Field, gamma: &ConnectionForm, p: f64, alpha: f64, grid: &HalfSpaceGrid) -> Result<Energy> {
    check_weight(p, alpha)?;
    if u.dim_domain() != grid.n + 1 {
        return Err(Error::DimensionMismatch {
            expected: grid.n + 1,
            got: u.dim_domain(),
        });
    }
    let support = u.support();
    if support == Support::Empty {
        return Ok(Energy { grad: 0.0, mass: 0.0 });
    }
    let lateral_support = match &support {
        Support::Bounded(b) => Support::Bounded(BoxRegion {
            lo: b.lo[..grid.n].to_vec(),
            hi: b.hi[..grid.n].to_vec(),
        }),
        other => other.clone(),
    };
    lateral_inside(&lateral_support, &grid.lateral_region(), 0.0)?;

    let centers = grid.lateral_centers();
    let cells = grid.vertical_cells();
    let vol = grid.lateral_cell_volume();
    let nv = cells.len();
    let values: Vec<Result<(f64, f64)>> = (0..centers.len() * nv)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / nv, idx % nv);
            let c = &cells[j];
            let mut z = Vector::zeros(grid.n + 1);
            z.rows_mut(0, grid.n).copy_from(&centers[i]);
            z[grid.n] = c.mid;
            let w = vol * c.weight_moment(alpha);
            let uz = u.value(&z)?;
            let du = covariant_derivative(u, gamma, &z)?;
            Ok((hs_norm(&du).powf(p) * w, uz.norm().powf(p) * w))
        })
        .collect();
    let mut terms = Vec::with_capacity(values.len());
    for v in values {
        terms.push(v?);
    }
    Ok(Energy {
        grad: det_sum(terms.len(), |i| terms[i].0),
        mass: det_sum(terms.len(), |i| terms[i].1),
    })
}

/// Segment transports between boundary cell centers, keyed by unordered pair.
#[derive(Debug, Clone, Default)]
pub struct TransportCache {
    index: HashMap<(u32, u32), usize>,
    ops: Vec<OrthoOp>,
}

impl TransportCache {
    /// Transports `R(cᵢ, cⱼ)` for all `i < j` with `pairs(i, j)` true.
    pub fn build<F>(gamma: &ConnectionForm, centers: &[Vector], steps: usize, pairs: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> bool + Sync,
    {
        let n = centers.len();
        let keys: Vec<(u32, u32)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| pairs(i, j))
            .map(|(i, j)| (i as u32, j as u32))
            .collect();
        let ops: Vec<Result<OrthoOp>> = keys
            .par_iter()
            .map(|&(i, j)| transport_segment(gamma, &centers[i as usize], &centers[j as usize], steps))
            .collect();
        let mut cache = TransportCache {
            index: HashMap::with_capacity(keys.len()),
            ops: Vec::with_capacity(keys.len()),
        };
        for (k, op) in keys.into_iter().zip(ops) {
            cache.index.insert(k, cache.ops.len());
            cache.ops.push(op?);
        }
        Ok(cache)
    }

    /// `R(cᵢ, cⱼ)`, using `R(cⱼ, cᵢ) = R(cᵢ, cⱼ)ᵀ` for the reverse direction.
    pub fn get(&self, i: usize, j: usize) -> Option<OrthoOp> {
        if i < j {
            self.index.get(&(i as u32, j as u32)).map(|&k| self.ops[k].clone())
        } else {
            self.index.get(&(j as u32, i as u32)).map(|&k| self.ops[k].inverse())
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormResult {
    /// The p-th power of the seminorm.
    pub value: f64,
    /// Part of `value` coming from pairs with one point outside the box.
    pub exterior_tail: f64,
    /// Estimate of the excluded near-diagonal mass.
    pub residual_bound: f64,
    /// Leading-order mass of the excluded near-diagonal cells, from the
    /// linearization `u(x) − R(x,y)u(y) ≈ D_Γu(x)[x − y]`.
    pub shell_correction: f64,
    pub grid: usize,
    pub r_excl: usize,
    pub steps: usize,
}

impl SeminormResult {
    pub fn seminorm(&self, p: f64) -> f64 {
        self.value.powf(1.0 / p)
    }

    /// `value + shell_correction`.
    pub fn corrected(&self) -> f64 {
        self.value + self.shell_correction
    }
}

/// Radial extent `ρ(θ)` of the excluded cells `{k : |k| < r}` around a center,
/// in units of the cell width, for boundary dimension 2.
fn excluded_extent_2d(r_excl: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let r = r_excl as f64 * (1.0 - 1e-9);
    let reach = r_excl as i64;
    let inside = |x: f64, y: f64| {
        let (i, j) = (x.round(), y.round());
        (i.abs() as i64) <= reach && (j.abs() as i64) <= reach && (i * i + j * j).sqrt() < r
    };
    let dt = 1.0 / 1024.0;
    let mut t = 0.0;
    while inside((t + dt) * c, (t + dt) * s) {
        t += dt;
    }
    t + 0.5 * dt
}

/// Weights `w_k` and unit directions `θ_k` with `Σ_k w_k ‖Aθ_k‖^p` approximating
/// `∫_{excluded} ‖Ay‖^p |y|^{−n−sp} dy` for a constant linear map `A`.
fn shell_rule(n: usize, r_excl: usize, h: f64, one_minus: f64) -> Result<Vec<(f64, Vector)>> {
    match n {
        1 => {
            let rho = (r_excl as f64 - 0.5) * h;
            let w = rho.powf(one_minus) / one_minus;
            Ok(vec![(w, Vector::from_element(1, 1.0)), (w, Vector::from_element(1, -1.0))])
        }
        2 => {
            let dtheta = 2.0 * PI / TAIL_ANGLES as f64;
            Ok((0..TAIL_ANGLES)
                .map(|k| {
                    let theta = (k as f64 + 0.5) * dtheta;
                    let rho = excluded_extent_2d(r_excl, theta) * h;
                    (dtheta * rho.powf(one_minus) / one_minus, Vector::from_vec(vec![theta.cos(), theta.sin()]))
                })
                .collect())
        }
        n => Err(Error::invalid(format!(
            "shell correction is implemented for boundary dimension 1 or 2, got {n}"
        ))),
    }
}

/// `∫_{ℝ^n ∖ box} |x − y|^{−n−sp} dy` for `x` inside the box.
pub fn exterior_kernel_mass(x: &Vector, region: &BoxRegion, sp: f64) -> Result<f64> {
    match x.len() {
        1 => Ok(((region.hi[0] - x[0]).powf(-sp) + (x[0] - region.lo[0]).powf(-sp)) / sp),
        2 => {
            let dtheta = 2.0 * PI / TAIL_ANGLES as f64;
            let total: f64 = (0..TAIL_ANGLES)
                .map(|k| {
                    let theta = (k as f64 + 0.5) * dtheta;
                    let (s, c) = theta.sin_cos();
                    let tx = if c > 0.0 {
                        (region.hi[0] - x[0]) / c
                    } else if c < 0.0 {
                        (region.lo[0] - x[0]) / c
                    } else {
                        f64::INFINITY
                    };
                    let ty = if s > 0.0 {
                        (region.hi[1] - x[1]) / s
                    } else if s < 0.0 {
                        (region.lo[1] - x[1]) / s
                    } else {
                        f64::INFINITY
                    };
                    tx.min(ty).powf(-sp)
                })
                .sum();
            Ok(total * dtheta / sp)
        }
        n => Err(Error::invalid(format!(
            "exterior tail is implemented for boundary dimension 1 or 2, got {n}"
        ))),
    }
}

/// Surface area of the unit sphere in ℝ^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // ω_{n−1} = 2π ω_{n−3} / (n − 2)
            2.0 * PI * unit_sphere_area(n - 2) / (n - 2) as f64
        }
    }
}

/// Covariant Gagliardo seminorm (p-th power) by a midpoint double sum over
/// boundary cell centers at distance ≥ `r_excl` cells, plus the exact
/// exterior tail where the second point leaves the box and `u` vanishes.
pub fn gagliardo_seminorm(
    u: &BoundaryField,
    gamma_b: &ConnectionForm,
    params: GagliardoParams,
    grid: &HalfSpaceGrid,
    steps: usize,
) -> Result<SeminormResult> {
    gagliardo_seminorm_with_cache(u, gamma_b, params, grid, steps, None)
}

pub fn gagliardo_seminorm_with_cache(
    u: &BoundaryField,
    gamma_b: &ConnectionForm,
    params: GagliardoParams,
    grid: &HalfSpaceGrid,
    steps: usize,
    cache: Option<&TransportCache>,
) -> Result<SeminormResult> {
    u.validate_on(grid)?;
    if gamma_b.dim_domain() != grid.n || gamma_b.dim_fiber() != u.field().dim_fiber() {
        return Err(Error::DimensionMismatch {
            expected: grid.n,
            got: gamma_b.dim_domain(),
        });
    }
    let n = grid.n;
    let p = params.p;
    let kexp = params.kernel_exponent(n);
    let h = grid.lateral_step();
    let vol = grid.lateral_cell_volume();
    let r_min = grid.spec.r_excl as f64 * h * (1.0 - 1e-9);
    let centers = grid.lateral_centers();
    let values: Vec<Vector> = centers
        .par_iter()
        .map(|c| u.value(c))
        .collect::<Result<Vec<_>>>()?;
    let active: Vec<bool> = values.iter().map(|v| v.amax() > 0.0).collect();
    let mut result = SeminormResult {
        value: 0.0,
        exterior_tail: 0.0,
        residual_bound: 0.0,
        shell_correction: 0.0,
        grid: grid.spec.n_lat,
        r_excl: grid.spec.r_excl,
        steps,
    };
    if !active.iter().any(|a| *a) {
        return Ok(result);
    }
    let wanted = |i: usize, j: usize| (active[i] || active[j]) && (&centers[i] - &centers[j]).norm() >= r_min;
    let owned;
    let cache = match cache {
        Some(c) => c,
        None => {
            owned = TransportCache::build(gamma_b, &centers, steps, wanted)?;
            &owned
        }
    };
    let count = centers.len();
    let pair_sum = try_det_sum(count, |i| {
        let mut acc = 0.0;
        for j in (i + 1)..count {
            if !wanted(i, j) {
                continue;
            }
            let r = cache.get(i, j).ok_or_else(|| Error::invalid("transport cache is missing a pair"))?;
            let dist = (&centers[i] - &centers[j]).norm();
            let diff = (&values[i] - r.apply(&values[j])).norm();
            acc += diff.powf(p) / dist.powf(kexp);
        }
        Ok(acc)
    })?;
    let region = grid.lateral_region();
    let sp = params.s * p;
    let tail = try_det_sum(count, |i| {
        if !active[i] {
            return Ok(0.0);
        }
        Ok(values[i].norm().powf(p) * exterior_kernel_mass(&centers[i], &region, sp)?)
    })?;
    let omega = unit_sphere_area(n);
    let one_minus = (1.0 - params.s) * p;
    let shell = omega * (grid.spec.r_excl as f64 * h).powf(one_minus) / one_minus;
    let rule = shell_rule(n, grid.spec.r_excl, h, one_minus)?;
    let derivs: Vec<Option<Matrix>> = (0..count)
        .into_par_iter()
        .map(|i| {
            if active[i] {
                covariant_derivative(u.field(), gamma_b, &centers[i]).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let residual = det_sum(count, |i| derivs[i].as_ref().map_or(0.0, |du| op_norm(du).powf(p)));
    let correction = det_sum(count, |i| {
        derivs[i]
            .as_ref()
            .map_or(0.0, |du| rule.iter().map(|(w, theta)| w * (du * theta).norm().powf(p)).sum())
    });
    result.shell_correction = correction * vol;
    result.exterior_tail = 2.0 * tail * vol;
    result.value = 2.0 * pair_sum * vol * vol + result.exterior_tail;
    result.residual_bound = residual * vol * shell;
    Ok(result)
}

fn norm_derivative(u: &Field, x: &Vector, dir: &Vector, h: f64) -> Result<Option<f64>> {
    let mut floor_hit = false;
    let d = central_diff4(h, |t| {
        let n = u.value(&(x + dir * t))?.norm();
        if n <= DIAMAGNETIC_FLOOR {
            floor_hit = true;
        }
        Ok(Vector::from_element(1, n))
    })?;
    Ok(if floor_hit { None } else { Some(d[0]) })
}

/// `max (|D‖U‖(x)[v]| − ‖D_Γ U(x)[v]‖)` over the given (point, direction) pairs;
/// the derivative of `‖U‖` is taken by fourth-order central differences with step
/// `h`, and stencils touching `‖U‖ ≤ 1e−8` are skipped. Returns `(defect, tested)`.
pub fn diamagnetic_defect_at(u: &Field, gamma: &ConnectionForm, pairs: &[(Vector, Vector)], h: f64) -> Result<(f64, usize)> {
    let results: Vec<Result<Option<f64>>> = pairs
        .par_iter()
        .map(|(x, v)| {
            let Some(dn) = norm_derivative(u, x, v, h)? else {
                return Ok(None);
            };
            let cov = (covariant_derivative(u, gamma, x)? * v).norm();
            Ok(Some(dn.abs() - cov))
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut tested = 0;
    for r in results {
        if let Some(d) = r? {
            worst = worst.max(d);
            tested += 1;
        }
    }
    Ok((if tested == 0 { 0.0 } else { worst }, tested))
}

/// Diamagnetic defect over the quadrature points of `grid` and all coordinate directions.
pub fn diamagnetic_defect(u: &Field, gamma: &ConnectionForm, grid: &HalfSpaceGrid) -> Result<f64> {
    let d = grid.n + 1;
    let mut pairs = Vec::new();
    let cells = grid.vertical_cells();
    for c in grid.lateral_centers() {
        for cell in &cells {
            let mut z = Vector::zeros(d);
            z.rows_mut(0, grid.n).copy_from(&c);
            z[grid.n] = cell.mid;
            for k in 0..d {
                let mut e = Vector::zeros(d);
                e[k] = 1.0;
                pairs.push((z.clone(), e));
            }
        }
    }
    let h = 1e-3 * grid.lateral_step().min(cells[0].mid);
    diamagnetic_defect_at(u, gamma, &pairs, h.max(1e-6)).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::{AnalyticField, Profile, VectorPotential, Window};
    use crate::grid::QuadratureSpec;

    fn grid(n: usize, n_lat: usize) -> HalfSpaceGrid {
        HalfSpaceGrid::new(n, 2.6, 1.5, QuadratureSpec::new(n_lat, 16, 2.0, 1).unwrap()).unwrap()
    }

    fn bump(d: usize, m: usize) -> Field {
        let mut amp = vec![0.0; m];
        amp[0] = 1.0;
        amp[m - 1] += 0.5;
        Field::analytic(
            d,
            AnalyticField {
                profile: Profile::Gaussian { amplitude: amp, center: vec![0.1; d], width: 0.5 },
                window: Some(Window { center: vec![0.0; d], radius: 0.75 }),
            },
        )
    }

    #[test]
    fn params_validation() {
        let g = GagliardoParams::critical(2.0).unwrap();
        assert_eq!(g.alpha(), 0.0);
        assert!(matches!(GagliardoParams::new(1.0, 2.0), Err(Error::WeightOutOfRange { .. })));
        assert!(GagliardoParams::new(0.3, 0.5).is_err());
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = grid(1, 16);
        let zero_b = BoundaryField::new(Field::zero(1, 2));
        let gam = ConnectionForm::zero(1, 2);
        let params = GagliardoParams::new(0.5, 2.0).unwrap();
        assert_eq!(gagliardo_seminorm(&zero_b, &gam, params, &g, 16).unwrap().value, 0.0);
        let e = weighted_w1p_energy(&Field::zero(2, 2), &ConnectionForm::zero(2, 2), 2.0, 0.0, &g).unwrap();
        assert_eq!((e.grad, e.mass), (0.0, 0.0));
        let c = BoundaryField::new(Field::constant(1, vec![1.0, 2.0]));
        assert!(matches!(gagliardo_seminorm(&c, &gam, params, &g, 16), Err(Error::UnsupportedField(_))));
    }

    #[test]
    fn exterior_tail_in_two_dimensions() {
        // For the center of [−1,1]² the mass equals (1/sp)∫ρ(θ)^{−sp}dθ; at sp = 2 this is
        // (1/2)·8∫_0^{π/4} cos²θ dθ = π/2 + 1.
        let region = BoxRegion::cube(2, 1.0);
        let m = exterior_kernel_mass(&Vector::zeros(2), &region, 2.0).unwrap();
        assert!((m - (PI / 2.0 + 1.0)).abs() < 1e-4, "{m}");
        let m1 = exterior_kernel_mass(&Vector::from_vec(vec![0.5]), &BoxRegion::cube(1, 1.0), 1.0).unwrap();
        assert!((m1 - (2.0 + 2.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn seminorm_scales_with_power() {
        let g = grid(1, 24);
        let gam = ConnectionForm::abelian(VectorPotential::flux(2, 1.0)).unwrap();
        let gb = std::sync::Arc::new(gam).restrict_to_boundary().unwrap();
        let params = GagliardoParams::new(0.5, 3.0).unwrap();
        let u = std::sync::Arc::new(Field::trace_of(std::sync::Arc::new(bump(2, 2))).unwrap());
        let a = gagliardo_seminorm(&BoundaryField::new((*u).clone()), &gb, params, &g, 32).unwrap();
        let scaled = Field::combination(vec![(-1.7, u)]).unwrap();
        let b = gagliardo_seminorm(&BoundaryField::new(scaled), &gb, params, &g, 32).unwrap();
        assert!((b.value / a.value - 1.7f64.powi(3)).abs() < 1e-12);
        assert!(a.residual_bound > 0.0 && a.exterior_tail > 0.0);
    }

    #[test]
    fn diamagnetic_equality_case() {
        let u = bump(2, 2);
        let g = grid(1, 16);
        let d = diamagnetic_defect(&u, &ConnectionForm::zero(2, 2), &g).unwrap();
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }
}
