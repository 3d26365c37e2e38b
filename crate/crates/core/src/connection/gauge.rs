use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{expm, Matrix, OrthoOp, SkewMap, Vector, ORTHO_TOL};
use crate::numerics::central_diff4;

/// Smooth real function on ℝ^d with an analytic gradient. Coefficient vectors
/// shorter than d are zero-padded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarFn {
    Affine { offset: f64, gradient: Vec<f64> },
    Wave { amplitude: f64, wavevector: Vec<f64>, phase: f64 },
    Gaussian { amplitude: f64, center: Vec<f64>, width: f64 },
    Sum { terms: Vec<ScalarFn> },
}

fn dot_padded(a: &[f64], x: &Vector) -> f64 {
    a.iter().zip(x.iter()).map(|(p, q)| p * q).sum()
}

fn padded(a: &[f64], d: usize) -> Vector {
    Vector::from_iterator(d, (0..d).map(|k| a.get(k).copied().unwrap_or(0.0)))
}

impl ScalarFn {
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            ScalarFn::Affine { offset, gradient } => offset + dot_padded(gradient, x),
            ScalarFn::Wave {
                amplitude,
                wavevector,
                phase,
            } => amplitude * (dot_padded(wavevector, x) + phase).sin(),
            ScalarFn::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r2 = (x - padded(center, x.len())).norm_squared();
                amplitude * (-r2 / (width * width)).exp()
            }
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let d = x.len();
        match self {
            ScalarFn::Affine { gradient, .. } => padded(gradient, d),
            ScalarFn::Wave {
                amplitude,
                wavevector,
                phase,
            } => padded(wavevector, d) * (amplitude * (dot_padded(wavevector, x) + phase).cos()),
            ScalarFn::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let dx = x - padded(center, d);
                let w2 = width * width;
                let scale = -2.0 * amplitude / w2 * (-dx.norm_squared() / w2).exp();
                dx * scale
            }
            ScalarFn::Sum { terms } => terms
                .iter()
                .fold(Vector::zeros(d), |acc, t| acc + t.gradient(x)),
        }
    }
}

pub type GaugeFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

#[derive(Clone)]
pub enum GaugeKind {
    Identity,
    Constant(OrthoOp),
    /// `φ(x) = exp(θ₁(x)G₁) · … · exp(θ_k(x)G_k)`.
    ExpProduct(Vec<(ScalarFn, SkewMap)>),
    /// Arbitrary orthogonal-valued map; its derivative is taken by central differences.
    Custom(GaugeFn),
}

impl fmt::Debug for GaugeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaugeKind::Identity => write!(f, "Identity"),
            GaugeKind::Constant(g) => f.debug_tuple("Constant").field(g).finish(),
            GaugeKind::ExpProduct(t) => f.debug_tuple("ExpProduct").field(t).finish(),
            GaugeKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Pointwise change of fiber frame `φ: Ω → O(m)`.
#[derive(Debug, Clone)]
pub struct GaugeField {
    dim_fiber: usize,
    kind: GaugeKind,
    fd_step: f64,
}

impl GaugeField {
    pub fn identity(m: usize) -> Self {
        GaugeField {
            dim_fiber: m,
            kind: GaugeKind::Identity,
            fd_step: 1e-3,
        }
    }

    pub fn constant(g: OrthoOp) -> Self {
        GaugeField {
            dim_fiber: g.dim(),
            kind: GaugeKind::Constant(g),
            fd_step: 1e-3,
        }
    }

    pub fn exp_product(factors: Vec<(ScalarFn, SkewMap)>) -> Result<Self> {
        let m = factors
            .first()
            .map(|(_, g)| g.dim())
            .ok_or_else(|| Error::invalid("exp-product gauge needs at least one factor"))?;
        if let Some((_, g)) = factors.iter().find(|(_, g)| g.dim() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: g.dim(),
            });
        }
        Ok(GaugeField {
            dim_fiber: m,
            kind: GaugeKind::ExpProduct(factors),
            fd_step: 1e-3,
        })
    }

    /// Abelian phase `e^{iθ(x)}` acting on ℂ ≅ ℝ².
    pub fn phase(theta: ScalarFn) -> Self {
        GaugeField::exp_product(vec![(theta, SkewMap::planar(1.0))]).expect("single planar factor")
    }

    pub fn custom(m: usize, map: GaugeFn) -> Self {
        GaugeField {
            dim_fiber: m,
            kind: GaugeKind::Custom(map),
            fd_step: 1e-3,
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn dim_fiber(&self) -> usize {
        self.dim_fiber
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    pub fn value(&self, x: &Vector) -> Result<OrthoOp> {
        match &self.kind {
            GaugeKind::Identity => Ok(OrthoOp::identity(self.dim_fiber)),
            GaugeKind::Constant(g) => Ok(g.clone()),
            GaugeKind::ExpProduct(factors) => Ok(factors
                .iter()
                .map(|(theta, gen)| expm(&gen.scale(theta.value(x))))
                .reduce(|a, b| a.compose(&b))
                .expect("non-empty product")),
            GaugeKind::Custom(map) => OrthoOp::with_tolerance(map(x), ORTHO_TOL)
                .map_err(|e| match e {
                    Error::NotOrthogonal { defect, .. } => Error::NonOrthogonalGauge { defect },
                    other => other,
                }),
        }
    }

    /// `Dφ(x)[v]`.
    pub fn derivative(&self, x: &Vector, v: &Vector) -> Result<Matrix> {
        let m = self.dim_fiber;
        match &self.kind {
            GaugeKind::Identity | GaugeKind::Constant(_) => Ok(Matrix::zeros(m, m)),
            GaugeKind::ExpProduct(factors) => {
                let exps: Vec<Matrix> = factors
                    .iter()
                    .map(|(theta, gen)| expm(&gen.scale(theta.value(x))).into_matrix())
                    .collect();
                let mut total = Matrix::zeros(m, m);
                for (j, (theta, gen)) in factors.iter().enumerate() {
                    let rate = theta.gradient(x).dot(v);
                    if rate == 0.0 {
                        continue;
                    }
                    let mut term = Matrix::identity(m, m);
                    for e in &exps[..j] {
                        term *= e;
                    }
                    term = term * gen.matrix() * &exps[j] * rate;
                    for e in &exps[j + 1..] {
                        term *= e;
                    }
                    total += term;
                }
                Ok(total)
            }
            GaugeKind::Custom(map) => {
                let h = self.fd_step;
                let col = central_diff4(h, |t| {
                    let y = x + v * t;
                    Ok(Vector::from_column_slice(map(&y).as_slice()))
                })?;
                Ok(Matrix::from_column_slice(m, m, col.as_slice()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::so3_generator;

    #[test]
    fn scalar_gradients_match_differences() {
        let f = ScalarFn::Sum {
            terms: vec![
                ScalarFn::Affine { offset: 0.2, gradient: vec![0.5, -1.0] },
                ScalarFn::Wave { amplitude: 0.7, wavevector: vec![1.1, 0.4], phase: 0.3 },
                ScalarFn::Gaussian { amplitude: -0.4, center: vec![0.1, 0.2], width: 0.8 },
            ],
        };
        let x = Vector::from_vec(vec![0.3, -0.6]);
        let g = f.gradient(&x);
        for k in 0..2 {
            let mut e = Vector::zeros(2);
            e[k] = 1.0;
            let fd = central_diff4(1e-3, |t| Ok(Vector::from_element(1, f.value(&(&x + &e * t))))).unwrap();
            assert!((fd[0] - g[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_product_derivative_matches_differences() {
        let gauge = GaugeField::exp_product(vec![
            (ScalarFn::Wave { amplitude: 0.9, wavevector: vec![1.0, 0.5, 0.0], phase: 0.1 }, so3_generator(0)),
            (ScalarFn::Affine { offset: 0.0, gradient: vec![0.3, -0.7, 0.2] }, so3_generator(2)),
        ])
        .unwrap();
        let x = Vector::from_vec(vec![0.2, -0.4, 0.5]);
        let v = Vector::from_vec(vec![0.3, 1.0, -0.5]);
        let analytic = gauge.derivative(&x, &v).unwrap();
        let fd = central_diff4(1e-3, |t| {
            Ok(Vector::from_column_slice(gauge.value(&(&x + &v * t)).unwrap().matrix().as_slice()))
        })
        .unwrap();
        let fd = Matrix::from_column_slice(3, 3, fd.as_slice());
        assert!((analytic - fd).amax() < 1e-10);
    }

    #[test]
    fn custom_gauge_rejects_non_orthogonal() {
        let g = GaugeField::custom(2, Arc::new(|_| Matrix::identity(2, 2) * 1.1));
        assert!(matches!(g.value(&Vector::zeros(2)), Err(Error::NonOrthogonalGauge { .. })));
    }
}
