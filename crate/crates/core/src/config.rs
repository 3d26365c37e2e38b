//! Scenario files: one TOML document per run.
//!
//! ```toml
//! name = "abelian-n1"
//! n = 1
//! m = 2
//! seed = 7
//! steps = 64
//!
//! [connection]
//! family = "flux-abelian"
//! b = 1.0
//!
//! [field]
//! kind = "gaussian-bump"
//! amplitude = [1.0, 0.3]
//! center = [0.0, 0.0]
//! width = 0.5
//! radius = 0.75
//!
//! [analysis]
//! p = [2.0, 3.0]
//! beta = "auto"
//!
//! [quadrature]
//! half_width = 2.6
//! height = 1.5
//! n_lat = 32
//! n_vert = 32
//! levels = 3
//! ```
//!
//! `gauge` and `charts` are optional; a seeded gauge is drawn when `gauge` is absent.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{ChartSpec, ConnectionForm, Field, GaugeField};
use crate::error::{Error, Result};
use crate::grid::{HalfSpaceGrid, QuadratureSpec};
use crate::registry::{draw_gauge, ConnectionSpec, FieldSpec, GaugeSpec};
use crate::sobolev::{BoundaryField, GagliardoParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Step count for identities checked to near machine precision.
    #[serde(default = "default_fine_steps")]
    pub fine_steps: usize,
    pub connection: ConnectionSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
    #[serde(default = "default_charts")]
    pub charts: Vec<ChartSpec>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_steps() -> usize {
    64
}

fn default_fine_steps() -> usize {
    512
}

fn default_charts() -> Vec<ChartSpec> {
    vec![
        ChartSpec::Identity,
        ChartSpec::Dilation { factor: 1.5 },
        ChartSpec::Rotation { angle: 0.6 },
        ChartSpec::Shear { amplitude: 0.3, frequency: 1.2 },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSetting {
    Value(f64),
    Keyword(BetaKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Integrability exponents; each runs at `s = 1 − 1/p` unless `s` is set.
    pub p: Vec<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    pub beta: BetaSetting,
    /// Radius of the local variant; raises the automatic β to cover `1/R²`.
    #[serde(default)]
    pub local_radius: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            p: vec![2.0, 3.0],
            s: None,
            beta: BetaSetting::Keyword(BetaKeyword::Auto),
            local_radius: None,
        }
    }
}

impl AnalysisConfig {
    pub fn params(&self) -> Result<Vec<GagliardoParams>> {
        self.p
            .iter()
            .map(|&p| match self.s {
                Some(s) => GagliardoParams::new(s, p),
                None => GagliardoParams::critical(p),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub half_width: f64,
    pub height: f64,
    pub n_lat: usize,
    pub n_vert: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
    #[serde(default = "default_r_excl")]
    pub r_excl: usize,
    /// Lateral levels in refinement series: `n_lat · (1 + k/2)` for `k < levels`.
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_grading() -> f64 {
    2.0
}

fn default_r_excl() -> usize {
    1
}

fn default_levels() -> usize {
    3
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            half_width: 2.6,
            height: 1.5,
            n_lat: 32,
            n_vert: 32,
            grading: default_grading(),
            r_excl: default_r_excl(),
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub paths: usize,
    pub triangles: usize,
    pub homotopies: usize,
    pub diamagnetic_pairs: usize,
    pub curvature_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            paths: 200,
            triangles: 500,
            homotopies: 100,
            diamagnetic_pairs: 10_000,
            curvature_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the extension as a raw field dump.
    pub dump_fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            dump_fields: false,
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("abelian-n1", include_str!("presets/abelian-n1.toml")),
    ("so3-n1", include_str!("presets/so3-n1.toml")),
    ("zero-n1", include_str!("presets/zero-n1.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let field = match e.span() {
                Some(span) => format!("line {}", line_of(text, span.start)),
                None => "document".to_string(),
            };
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`; known: {}", preset_names().join(", "))))?;
        Self::parse(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m < 2 {
            return Err(Error::config("n/m", "need n ≥ 1 and m ≥ 2"));
        }
        self.connection
            .build(self.d(), self.m)
            .map_err(|e| Error::config("connection", e.to_string()))?;
        if self.field.dim_fiber() != self.m {
            return Err(Error::config(
                "field",
                format!("field has {} components but m = {}", self.field.dim_fiber(), self.m),
            ));
        }
        if let Some(g) = &self.gauge {
            g.build(self.m).map_err(|e| Error::config("gauge", e.to_string()))?;
        }
        self.analysis.params().map_err(|e| Error::config("analysis", e.to_string()))?;
        if let BetaSetting::Value(b) = self.analysis.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::config("analysis.beta", "must be a finite nonnegative number or \"auto\""));
            }
        }
        if self.quadrature.levels == 0 {
            return Err(Error::config("quadrature.levels", "need at least one level"));
        }
        if self.steps.min(self.fine_steps) < crate::transport::MIN_STEPS {
            return Err(Error::config("steps", format!("need at least {}", crate::transport::MIN_STEPS)));
        }
        self.grid().map_err(|e| Error::config("quadrature", e.to_string()))?;
        Ok(())
    }

    /// Base dimension `n + 1`.
    pub fn d(&self) -> usize {
        self.n + 1
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.quadrature.levels = levels;
        self
    }

    pub fn grid(&self) -> Result<HalfSpaceGrid> {
        let q = &self.quadrature;
        HalfSpaceGrid::new(
            self.n,
            q.half_width,
            q.height,
            QuadratureSpec::new(q.n_lat, q.n_vert, q.grading, q.r_excl)?,
        )
    }

    /// Lateral cell counts of the refinement series.
    pub fn lateral_levels(&self) -> Vec<usize> {
        let base = self.quadrature.n_lat;
        (0..self.quadrature.levels).map(|k| base + k * base / 2).collect()
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn connection(&self) -> Result<Arc<ConnectionForm>> {
        self.connection.build(self.d(), self.m)
    }

    pub fn bulk_field(&self) -> Arc<Field> {
        Arc::new(self.field.build(self.d()))
    }

    pub fn boundary_field(&self) -> BoundaryField {
        self.field.build_boundary(self.n)
    }

    pub fn gauge_spec(&self) -> GaugeSpec {
        match &self.gauge {
            Some(g) => g.clone(),
            None => draw_gauge(&mut self.rng(0x9a), self.d(), self.m),
        }
    }

    pub fn gauge(&self) -> Result<GaugeField> {
        self.gauge_spec().build(self.m)
    }
}
