//! Named connection, gauge and field families used by scenarios and sweeps.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{AnalyticField, ConnectionForm, Field, GaugeField, Profile, ScalarFn, VectorPotential, Window};
use crate::error::{Error, Result};
use crate::lie::{commutator, SkewMap, Vector};
use crate::numerics::BoxRegion;
use crate::sobolev::BoundaryField;

/// How a family's curvature is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleTag {
    Flat,
    ClosedForm,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConnectionSpec {
    Zero,
    /// `Γ = i A·dx` with constant `A`.
    ConstantAbelian { a: Vec<f64> },
    /// `A(x) = B/2 (−x₂, x₁, 0, …)`.
    FluxAbelian { b: f64 },
    /// One axial vector per base direction.
    ConstantSo3 { generators: Vec<[f64; 3]> },
    /// `Γ(x)[e_i] = G_i + Σ_k x_k S_ik`, axial vectors.
    AffineSo3 { base: Vec<[f64; 3]>, slopes: Vec<Vec<[f64; 3]>> },
    GaugeWrapped { inner: Box<ConnectionSpec>, gauge: GaugeSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GaugeSpec {
    /// `e^{iθ(x)}` on ℝ².
    Phase { theta: ScalarFn },
    /// Product of exponentials; generators are given by their upper-triangular entries.
    ExpPath { factors: Vec<GaugeFactor> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeFactor {
    pub theta: ScalarFn,
    pub generator: Vec<f64>,
}

fn axial(w: &[f64; 3]) -> SkewMap {
    SkewMap::from_axial(*w)
}

fn expect_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::invalid(format!("{what}: expected {expected} entries, got {got}")));
    }
    Ok(())
}

fn expect_fiber(family: &str, m: usize, required: usize) -> Result<()> {
    if m != required {
        return Err(Error::invalid(format!("{family} needs fiber dimension {required}, got {m}")));
    }
    Ok(())
}

impl GaugeSpec {
    pub fn build(&self, m: usize) -> Result<GaugeField> {
        match self {
            GaugeSpec::Phase { theta } => {
                expect_fiber("phase gauge", m, 2)?;
                Ok(GaugeField::phase(theta.clone()))
            }
            GaugeSpec::ExpPath { factors } => GaugeField::exp_product(
                factors
                    .iter()
                    .map(|f| Ok((f.theta.clone(), SkewMap::from_upper(m, &f.generator)?)))
                    .collect::<Result<_>>()?,
            ),
        }
    }
}

impl ConnectionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ConnectionSpec::Zero => "zero",
            ConnectionSpec::ConstantAbelian { .. } => "constant-abelian",
            ConnectionSpec::FluxAbelian { .. } => "flux-abelian",
            ConnectionSpec::ConstantSo3 { .. } => "constant-so3",
            ConnectionSpec::AffineSo3 { .. } => "affine-so3",
            ConnectionSpec::GaugeWrapped { .. } => "gauge-wrapped",
        }
    }

    pub fn oracle(&self) -> OracleTag {
        match self {
            ConnectionSpec::Zero | ConnectionSpec::ConstantAbelian { .. } => OracleTag::Flat,
            ConnectionSpec::GaugeWrapped { inner, .. } if inner.oracle() == OracleTag::Flat => OracleTag::Flat,
            _ => OracleTag::ClosedForm,
        }
    }

    /// Builds the connection on ℝ^d with fiber ℝ^m.
    pub fn build(&self, d: usize, m: usize) -> Result<Arc<ConnectionForm>> {
        let form = match self {
            ConnectionSpec::Zero => ConnectionForm::zero(d, m),
            ConnectionSpec::ConstantAbelian { a } => {
                expect_fiber("constant-abelian", m, 2)?;
                expect_len("constant-abelian potential", a.len(), d)?;
                ConnectionForm::abelian(VectorPotential::constant(Vector::from_column_slice(a)))?
            }
            ConnectionSpec::FluxAbelian { b } => {
                expect_fiber("flux-abelian", m, 2)?;
                if d < 2 {
                    return Err(Error::invalid("flux-abelian needs a base of dimension at least 2"));
                }
                ConnectionForm::abelian(VectorPotential::flux(d, *b))?
            }
            ConnectionSpec::ConstantSo3 { generators } => {
                expect_fiber("constant-so3", m, 3)?;
                expect_len("constant-so3 generators", generators.len(), d)?;
                ConnectionForm::constant(generators.iter().map(axial).collect())?
            }
            ConnectionSpec::AffineSo3 { base, slopes } => {
                expect_fiber("affine-so3", m, 3)?;
                expect_len("affine-so3 base", base.len(), d)?;
                expect_len("affine-so3 slopes", slopes.len(), d)?;
                ConnectionForm::affine(
                    base.iter().map(axial).collect(),
                    slopes.iter().map(|row| row.iter().map(axial).collect()).collect(),
                )?
            }
            ConnectionSpec::GaugeWrapped { inner, gauge } => {
                let inner = inner.build(d, m)?;
                inner.gauge_transform(gauge.build(m)?)?
            }
        };
        Ok(Arc::new(form))
    }

    /// Closed-form `K(x)[v, w]`.
    pub fn curvature_oracle(&self, m: usize, x: &Vector, v: &Vector, w: &Vector) -> Result<SkewMap> {
        match self {
            ConnectionSpec::Zero | ConnectionSpec::ConstantAbelian { .. } => Ok(SkewMap::zero(m)),
            ConnectionSpec::FluxAbelian { b } => Ok(SkewMap::planar(b * (v[0] * w[1] - v[1] * w[0]))),
            ConnectionSpec::ConstantSo3 { generators } => {
                let gv = combine(generators.iter().map(axial), v);
                let gw = combine(generators.iter().map(axial), w);
                commutator(&gv, &gw)
            }
            ConnectionSpec::AffineSo3 { base, slopes } => {
                let d = base.len();
                let gamma_at = |u: &Vector| {
                    let mut acc = SkewMap::zero(3);
                    for i in 0..d {
                        let mut g = axial(&base[i]);
                        for k in 0..d {
                            g = g.add(&axial(&slopes[i][k]).scale(x[k]));
                        }
                        acc = acc.add(&g.scale(u[i]));
                    }
                    acc
                };
                let mut k = commutator(&gamma_at(v), &gamma_at(w))?;
                for i in 0..d {
                    for j in 0..d {
                        let c = w[i] * v[j] - v[i] * w[j];
                        if c != 0.0 {
                            k = k.add(&axial(&slopes[i][j]).scale(c));
                        }
                    }
                }
                Ok(k)
            }
            ConnectionSpec::GaugeWrapped { inner, gauge } => {
                let k = inner.curvature_oracle(m, x, v, w)?;
                Ok(k.conjugate(&gauge.build(m)?.value(x)?))
            }
        }
    }
}

fn combine(gens: impl Iterator<Item = SkewMap>, v: &Vector) -> SkewMap {
    gens.zip(v.iter()).fold(SkewMap::zero(3), |acc, (g, c)| acc.add(&g.scale(*c)))
}

/// Compactly supported field families. Centers shorter than the domain are zero-padded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    GaussianBump { amplitude: Vec<f64>, center: Vec<f64>, width: f64, radius: f64 },
    WindowedLinear { offset: Vec<f64>, slope: Vec<Vec<f64>>, center: Vec<f64>, radius: f64 },
    WindowedConstant { value: Vec<f64>, center: Vec<f64>, radius: f64 },
}

impl FieldSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::GaussianBump { .. } => "gaussian-bump",
            FieldSpec::WindowedLinear { .. } => "windowed-linear",
            FieldSpec::WindowedConstant { .. } => "windowed-constant",
        }
    }

    pub fn dim_fiber(&self) -> usize {
        match self {
            FieldSpec::GaussianBump { amplitude, .. } => amplitude.len(),
            FieldSpec::WindowedLinear { offset, .. } => offset.len(),
            FieldSpec::WindowedConstant { value, .. } => value.len(),
        }
    }

    fn analytic(&self, d: usize) -> AnalyticField {
        let trim = |c: &Vec<f64>| c.iter().copied().take(d).collect::<Vec<_>>();
        let (profile, center, radius) = match self {
            FieldSpec::GaussianBump { amplitude, center, width, radius } => (
                Profile::Gaussian { amplitude: amplitude.clone(), center: trim(center), width: *width },
                center,
                *radius,
            ),
            FieldSpec::WindowedLinear { offset, slope, center, radius } => (
                Profile::Linear {
                    offset: offset.clone(),
                    slope: slope.iter().map(|r| r.iter().copied().take(d).collect()).collect(),
                },
                center,
                *radius,
            ),
            FieldSpec::WindowedConstant { value, center, radius } => {
                (Profile::Constant { value: value.clone() }, center, *radius)
            }
        };
        AnalyticField {
            profile,
            window: Some(Window { center: trim(center), radius }),
        }
    }

    /// The field on ℝ^d; a boundary center is lifted to height 0.
    pub fn build(&self, d: usize) -> Field {
        Field::analytic(d, self.analytic(d))
    }

    pub fn build_boundary(&self, n: usize) -> BoundaryField {
        BoundaryField::new(self.build(n))
    }
}

fn uniform_axial<R: Rng>(rng: &mut R, scale: f64) -> [f64; 3] {
    [
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    ]
}

fn random_scalar<R: Rng>(rng: &mut R, d: usize) -> ScalarFn {
    ScalarFn::Sum {
        terms: vec![
            ScalarFn::Affine {
                offset: rng.random_range(-1.0..1.0),
                gradient: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
            },
            ScalarFn::Wave {
                amplitude: rng.random_range(0.1..0.6),
                wavevector: (0..d).map(|_| rng.random_range(-1.5..1.5)).collect(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
        ],
    }
}

/// A random gauge of the kind matching `m`.
pub fn draw_gauge<R: Rng>(rng: &mut R, d: usize, m: usize) -> GaugeSpec {
    if m == 2 {
        GaugeSpec::Phase { theta: random_scalar(rng, d) }
    } else {
        let k = m * (m - 1) / 2;
        GaugeSpec::ExpPath {
            factors: (0..2)
                .map(|_| GaugeFactor {
                    theta: random_scalar(rng, d),
                    generator: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
                })
                .collect(),
        }
    }
}

/// A random connection from the families valid for fiber dimension 2 or 3.
pub fn draw_connection<R: Rng>(rng: &mut R, d: usize, m: usize) -> ConnectionSpec {
    let plain = if m == 2 {
        if rng.random_bool(0.5) || d < 2 {
            ConnectionSpec::ConstantAbelian { a: (0..d).map(|_| rng.random_range(-1.5..1.5)).collect() }
        } else {
            ConnectionSpec::FluxAbelian { b: rng.random_range(-2.0..2.0) }
        }
    } else if rng.random_bool(0.5) {
        ConnectionSpec::ConstantSo3 { generators: (0..d).map(|_| uniform_axial(rng, 1.0)).collect() }
    } else {
        ConnectionSpec::AffineSo3 {
            base: (0..d).map(|_| uniform_axial(rng, 0.8)).collect(),
            slopes: (0..d).map(|_| (0..d).map(|_| uniform_axial(rng, 0.5)).collect()).collect(),
        }
    };
    if rng.random_bool(0.25) {
        ConnectionSpec::GaugeWrapped { inner: Box::new(plain), gauge: draw_gauge(rng, d, m) }
    } else {
        plain
    }
}

/// Random constant connection with generators of the given operator scale.
pub fn draw_constant<R: Rng>(rng: &mut R, d: usize, m: usize, scale: f64) -> Result<ConnectionForm> {
    let k = m * (m - 1) / 2;
    let gens = (0..d)
        .map(|_| SkewMap::from_upper(m, &(0..k).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    ConnectionForm::constant(gens)
}

pub fn draw_point<R: Rng>(rng: &mut R, region: &BoxRegion) -> Vector {
    let u: Vec<f64> = (0..region.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
    region.from_unit(&u)
}

/// Standard generators as axial vectors, one per direction, cycling through L₁, L₂, L₃.
pub fn so3_axes(d: usize) -> Vec<[f64; 3]> {
    (0..d)
        .map(|i| {
            let mut w = [0.0; 3];
            w[i % 3] = 1.0;
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracles_match_computed_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let (d, m) = if trial % 2 == 0 { (2, 2) } else { (3, 3) };
            let spec = draw_connection(&mut rng, d, m);
            let gamma = spec.build(d, m).unwrap();
            let region = BoxRegion::cube(d, 1.0);
            let x = draw_point(&mut rng, &region);
            let v = draw_point(&mut rng, &region);
            let w = draw_point(&mut rng, &region);
            let computed = gamma.curvature(&x, &v, &w).unwrap();
            let oracle = spec.curvature_oracle(m, &x, &v, &w).unwrap();
            let err = (computed.matrix() - oracle.matrix()).amax();
            assert!(err < 1e-7, "{} {err}", spec.name());
        }
    }

    #[test]
    fn field_spec_round_trips_through_json() {
        let spec = FieldSpec::GaussianBump { amplitude: vec![1.0, 0.3], center: vec![0.1], width: 0.5, radius: 0.75 };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<FieldSpec>(&text).unwrap(), spec);
        assert_eq!(spec.build(2).dim_domain(), 2);
        assert_eq!(spec.build_boundary(1).dim(), 1);
    }

    #[test]
    fn fiber_mismatch_rejected() {
        assert!(ConnectionSpec::FluxAbelian { b: 1.0 }.build(2, 3).is_err());
        assert!(ConnectionSpec::ConstantSo3 { generators: so3_axes(2) }.build(2, 2).is_err());
    }
}
