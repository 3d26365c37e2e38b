use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{Matrix, Vector};
use crate::numerics::BoxRegion;

/// Largest Jacobian condition number accepted at a sampled point.
pub const MAX_CONDITION: f64 = 1e6;

pub type ChartMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type ChartJacobian = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

#[derive(Clone)]
pub enum ChartKind {
    Identity,
    /// `ψ(x) = A x + b` (dilations, rotations).
    Affine { matrix: Matrix, offset: Vector },
    /// `ψ(x) = x + a·sin(ω x_source)·e_target`.
    Shear {
        amplitude: f64,
        frequency: f64,
        source: usize,
        target: usize,
    },
    Custom { map: ChartMap, jacobian: ChartJacobian },
}

impl fmt::Debug for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartKind::Identity => write!(f, "Identity"),
            ChartKind::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            ChartKind::Shear {
                amplitude,
                frequency,
                source,
                target,
            } => f
                .debug_struct("Shear")
                .field("amplitude", amplitude)
                .field("frequency", frequency)
                .field("source", source)
                .field("target", target)
                .finish(),
            ChartKind::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

/// Serializable description of the built-in chart families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartSpec {
    Identity,
    Dilation { factor: f64 },
    /// Rotation by `angle` in the plane of lateral axes (0, 1); fixes the vertical axis.
    Rotation { angle: f64 },
    Shear { amplitude: f64, frequency: f64 },
}

/// Diffeomorphism `ψ: W → Ω` between domains of ℝ^d.
#[derive(Debug, Clone)]
pub struct Chart {
    dim: usize,
    kind: ChartKind,
    domain: Option<BoxRegion>,
}

impl Chart {
    pub fn identity(d: usize) -> Self {
        Chart {
            dim: d,
            kind: ChartKind::Identity,
            domain: None,
        }
    }

    pub fn affine(matrix: Matrix, offset: Vector) -> Result<Self> {
        let d = matrix.nrows();
        if !matrix.is_square() || offset.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: offset.len(),
            });
        }
        check_condition(&matrix)?;
        Ok(Chart {
            dim: d,
            kind: ChartKind::Affine { matrix, offset },
            domain: None,
        })
    }

    pub fn dilation(d: usize, factor: f64) -> Result<Self> {
        Chart::affine(Matrix::identity(d, d) * factor, Vector::zeros(d))
    }

    /// Rotation in the (0, 1) coordinate plane; needs d ≥ 2.
    pub fn rotation(d: usize, angle: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("rotation chart needs at least two coordinates"));
        }
        let mut r = Matrix::identity(d, d);
        let (s, c) = angle.sin_cos();
        r[(0, 0)] = c;
        r[(0, 1)] = -s;
        r[(1, 0)] = s;
        r[(1, 1)] = c;
        Chart::affine(r, Vector::zeros(d))
    }

    pub fn shear(d: usize, amplitude: f64, frequency: f64, source: usize, target: usize) -> Result<Self> {
        if source >= d || target >= d || source == target {
            return Err(Error::invalid("shear chart needs two distinct in-range axes"));
        }
        Ok(Chart {
            dim: d,
            kind: ChartKind::Shear {
                amplitude,
                frequency,
                source,
                target,
            },
            domain: None,
        })
    }

    pub fn custom(d: usize, map: ChartMap, jacobian: ChartJacobian) -> Self {
        Chart {
            dim: d,
            kind: ChartKind::Custom { map, jacobian },
            domain: None,
        }
    }

    pub fn from_spec(spec: &ChartSpec, d: usize) -> Result<Self> {
        match spec {
            ChartSpec::Identity => Ok(Chart::identity(d)),
            ChartSpec::Dilation { factor } => Chart::dilation(d, *factor),
            ChartSpec::Rotation { angle } => Chart::rotation(d, *angle),
            ChartSpec::Shear {
                amplitude,
                frequency,
            } => Chart::shear(d, *amplitude, *frequency, 0, d - 1),
        }
    }

    pub fn with_domain(mut self, domain: BoxRegion) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    fn check_domain(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &self.domain {
            Some(b) if !b.contains(x, 1e-12) => Err(Error::OutOfDomain {
                point: x.iter().copied().collect(),
            }),
            _ => Ok(()),
        }
    }

    pub fn map(&self, x: &Vector) -> Result<Vector> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            ChartKind::Identity => x.clone(),
            ChartKind::Affine { matrix, offset } => matrix * x + offset,
            ChartKind::Shear {
                amplitude,
                frequency,
                source,
                target,
            } => {
                let mut y = x.clone();
                y[*target] += amplitude * (frequency * x[*source]).sin();
                y
            }
            ChartKind::Custom { map, .. } => map(x),
        })
    }

    pub fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.check_domain(x)?;
        let d = self.dim;
        Ok(match &self.kind {
            ChartKind::Identity => Matrix::identity(d, d),
            ChartKind::Affine { matrix, .. } => matrix.clone(),
            ChartKind::Shear {
                amplitude,
                frequency,
                source,
                target,
            } => {
                let mut j = Matrix::identity(d, d);
                j[(*target, *source)] += amplitude * frequency * (frequency * x[*source]).cos();
                j
            }
            ChartKind::Custom { jacobian, .. } => jacobian(x),
        })
    }

    /// Validates the nonsingularity invariant at `x`.
    pub fn check_at(&self, x: &Vector) -> Result<()> {
        check_condition(&self.jacobian(x)?)
    }
}

fn check_condition(j: &Matrix) -> Result<()> {
    let sv = j.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond.is_finite() && cond < MAX_CONDITION) {
        return Err(Error::invalid(format!(
            "chart Jacobian is near-singular (condition number {cond:.3e})"
        )));
    }
    Ok(())
}
