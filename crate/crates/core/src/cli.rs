//! Command-line front end: builds a scenario from a config file or preset,
//! runs the requested checks and writes `report.json` / `report.csv`.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::config::{BetaSetting, ScenarioConfig};
use crate::connection::{
    covariant_derivative, curvature_gauge_defect, curvature_sup_norm, random_orthonormal_pair, Chart, ConnectionForm,
    Field, GaugeField, Support,
};
use crate::error::{Error, Result};
use crate::grid::HalfSpaceGrid;
use crate::lie::{op_norm, Matrix, Vector};
use crate::numerics::{observed_order, BoxRegion};
use crate::registry::{draw_point, ConnectionSpec};
use crate::report::{Report, Row};
use crate::sobolev::{diamagnetic_defect_at, gagliardo_seminorm, BoundaryField};
use crate::trace_ext::{
    auto_beta, extend, extension_inequality_report, trace, trace_inequality_report, ExtensionConfig, InequalityReport,
};
use crate::transport::{
    ftc_reconstruct, holonomy_triangle, segment_gauge_defect, transport_gauge_defect, transport_parameter_derivative,
    transport_path, transport_segment, triangle_difference_bound, Homotopy, Path, ABS_SLACK, EPS_DISC,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Spread allowed between the largest and smallest inequality ratio over a refinement series.
pub const RATIO_SPREAD: f64 = 0.10;
const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "gaugetrace", version, about = "Gauge-covariant transport, curvature and trace checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of lateral grid levels in refinement series.
    #[arg(long)]
    pub refine: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Transport isometry, colinear and gauge laws, FTC and parameter derivative.
    Transport(RunArgs),
    /// Pointwise curvature, sup-norm, gauge laws and commutator identity.
    Curvature(RunArgs),
    /// Random-triangle holonomy sweep.
    Holonomy(RunArgs),
    /// Gagliardo seminorm series, gauge invariance and diamagnetic check.
    Seminorm(RunArgs),
    /// Trace inequality reports.
    TraceCheck(RunArgs),
    /// Extension inequality reports, round trip and attainment.
    ExtendCheck(RunArgs),
    /// Covariant derivative under chart pullback.
    PullbackCheck(RunArgs),
    /// Everything above.
    Suite(RunArgs),
    /// Lists built-in presets.
    Presets,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transport(_) => "transport",
            Command::Curvature(_) => "curvature",
            Command::Holonomy(_) => "holonomy",
            Command::Seminorm(_) => "seminorm",
            Command::TraceCheck(_) => "trace-check",
            Command::ExtendCheck(_) => "extend-check",
            Command::PullbackCheck(_) => "pullback-check",
            Command::Suite(_) => "suite",
            Command::Presets => "presets",
        }
    }

    fn args(&self) -> Option<&RunArgs> {
        match self {
            Command::Transport(a)
            | Command::Curvature(a)
            | Command::Holonomy(a)
            | Command::Seminorm(a)
            | Command::TraceCheck(a)
            | Command::ExtendCheck(a)
            | Command::PullbackCheck(a)
            | Command::Suite(a) => Some(a),
            Command::Presets => None,
        }
    }
}

/// Loads the scenario and applies flag overrides.
pub fn load_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ScenarioConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::config("--config", format!("{}: {io}", path.display())),
            other => other,
        })?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => return Err(Error::config("--config", "either --config or --preset is required")),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(levels) = args.refine {
        cfg = cfg.with_levels(levels);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Shared scenario objects.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub grid: HalfSpaceGrid,
    pub gamma: Arc<ConnectionForm>,
    pub gauge: GaugeField,
    pub gamma_gauged: Arc<ConnectionForm>,
    pub field: Arc<Field>,
    pub field_gauged: Arc<Field>,
    /// Box around the bulk field's support, clipped to the half-space.
    pub support: BoxRegion,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let gamma = cfg.connection()?;
        let gauge = cfg.gauge()?;
        let gamma_gauged = Arc::new(gamma.gauge_transform(gauge.clone())?);
        let field = cfg.bulk_field();
        let field_gauged = Arc::new(Field::gauged(Arc::clone(&field), gauge.clone())?);
        let region = grid.region();
        let support = match field.support() {
            Support::Bounded(b) => BoxRegion::new(
                b.lo.iter().zip(&region.lo).map(|(a, r)| a.max(*r)).collect(),
                b.hi.iter().zip(&region.hi).map(|(a, r)| a.min(*r)).collect(),
            )?,
            _ => region,
        };
        Ok(Scenario {
            cfg,
            grid,
            gamma,
            gauge,
            gamma_gauged,
            field,
            field_gauged,
            support,
        })
    }

    fn n(&self) -> usize {
        self.cfg.n
    }

    fn m(&self) -> usize {
        self.cfg.m
    }

    fn d(&self) -> usize {
        self.cfg.d()
    }

    fn at_most(&self, check: &str, property: &str, value: f64, bound: f64) -> Row {
        Row::at_most(check, property, self.n(), self.m(), value, bound)
    }

    fn finite(&self, check: &str, property: &str, value: f64) -> Row {
        Row::finite(check, property, self.n(), self.m(), value)
    }

    fn at_least(&self, check: &str, property: &str, value: f64, bound: f64) -> Row {
        Row::at_least(check, property, self.n(), self.m(), value, bound)
    }

    /// Convergence-order row, or a roundoff row when every error is already at the floor.
    fn order_row(&self, check: &str, property: &str, h: &[f64], err: &[f64], min_order: f64) -> Row {
        let worst = err.iter().copied().fold(0.0, f64::max);
        if worst <= ROUNDOFF_FLOOR {
            self.at_most(check, &format!("{property} (errors at roundoff)"), worst, ROUNDOFF_FLOOR)
        } else {
            self.at_least(check, property, observed_order(h, err), min_order)
        }
    }

    pub fn beta(&self) -> Result<f64> {
        match self.cfg.analysis.beta {
            BetaSetting::Value(b) => Ok(b),
            BetaSetting::Keyword(_) => auto_beta(&self.gamma, &self.grid, self.cfg.analysis.local_radius),
        }
    }

    pub fn boundary_field(&self) -> Result<BoundaryField> {
        trace(Arc::clone(&self.field))
    }

    fn boundary_field_gauged(&self) -> Result<BoundaryField> {
        trace(Arc::clone(&self.field_gauged))
    }

    fn levels(&self) -> Result<Vec<HalfSpaceGrid>> {
        self.cfg
            .lateral_levels()
            .into_iter()
            .map(|nl| self.grid.with_lateral_cells(nl))
            .collect()
    }

    fn random_path<R: Rng>(&self, rng: &mut R, pieces: usize) -> Result<Path> {
        let region = self.grid.region();
        if pieces <= 1 {
            Path::segment(draw_point(rng, &region), draw_point(rng, &region))
        } else {
            Path::piecewise_linear((0..=pieces).map(|_| draw_point(rng, &region)).collect())
        }
    }
}

fn run_check(report: &mut Report, name: &str, f: impl FnOnce(&mut Report) -> Result<()>) {
    if let Err(e) = f(report) {
        report.record_error(name, e);
    }
}

fn relative(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

pub fn check_transport(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "transport", cfg.seed);
    let steps = cfg.steps;
    let fine = cfg.fine_steps;
    run_check(&mut report, "transport-isometry", |r| {
        let mut rng = cfg.rng(1);
        let mut worst: f64 = 0.0;
        for k in 0..cfg.sweep.paths {
            let path = sc.random_path(&mut rng, 1 + 2 * (k % 2))?;
            worst = worst.max(transport_path(&sc.gamma, &path, steps)?.ortho_defect);
        }
        r.push(sc.at_most("transport-isometry", "max ‖PᵀP − I‖ over transport samples", worst, 1e-10));
        Ok(())
    });
    run_check(&mut report, "transport-colinear", |r| {
        let mut rng = cfg.rng(2);
        let region = sc.grid.region();
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.sweep.paths {
            let x = draw_point(&mut rng, &region);
            let y = draw_point(&mut rng, &region);
            let t: f64 = rng.random_range(0.0..1.0);
            let z = &x + (&y - &x) * t;
            let m = sc.m();
            let loop_op = transport_segment(&sc.gamma, &x, &y, fine)?.matrix()
                * transport_segment(&sc.gamma, &y, &z, fine)?.matrix()
                * transport_segment(&sc.gamma, &z, &x, fine)?.matrix();
            worst = worst.max(op_norm(&(loop_op - Matrix::identity(m, m))));
        }
        r.push(sc.at_most("transport-colinear", "‖R(x,y)R(y,z)R(z,x) − I‖ for colinear x, y, z", worst, 1e-9));
        Ok(())
    });
    run_check(&mut report, "transport-gauge", |r| {
        let mut rng = cfg.rng(3);
        let (mut path_worst, mut seg_worst): (f64, f64) = (0.0, 0.0);
        for k in 0..cfg.sweep.paths.min(40) {
            let path = sc.random_path(&mut rng, 1 + (k % 3))?;
            path_worst = path_worst.max(transport_gauge_defect(&sc.gamma, &sc.gamma_gauged, &sc.gauge, &path, fine)?);
            let region = sc.grid.region();
            let (x, y) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region));
            seg_worst = seg_worst.max(segment_gauge_defect(&sc.gamma, &sc.gamma_gauged, &sc.gauge, &x, &y, fine)?);
        }
        r.push(sc.at_most("transport-gauge", "‖Pt′(t) − φ(γ(t))Pt(t)φ(γ(1))⁻¹‖", path_worst, 1e-6));
        r.push(sc.at_most("segment-gauge", "‖R′(x,y)φ(y) − φ(x)R(x,y)‖", seg_worst, 1e-6));
        Ok(())
    });
    run_check(&mut report, "transport-convergence", |r| {
        let mut rng = cfg.rng(4);
        let path = sc.random_path(&mut rng, 1)?;
        let counts = [16usize, 32, 64];
        let mut errs = Vec::new();
        for &nsteps in &counts {
            let a = transport_path(&sc.gamma, &path, nsteps)?;
            let b = transport_path(&sc.gamma, &path, 4 * nsteps)?;
            errs.push(op_norm(&(a.initial().matrix() - b.initial().matrix())));
        }
        let h: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        r.push(sc.order_row("transport-convergence", "observed order of ‖P_N(0) − P_4N(0)‖ ≥ 3.5", &h, &errs, 3.5));
        Ok(())
    });
    run_check(&mut report, "ftc", |r| {
        let mut rng = cfg.rng(5);
        let nodes: Vec<Vector> = (0..3).map(|_| draw_point(&mut rng, &sc.support)).collect();
        let path = Path::piecewise_linear(nodes)?;
        let counts = [64usize, 128, 256, 512];
        let mut errs = Vec::new();
        for &nsteps in &counts {
            errs.push(ftc_reconstruct(&sc.gamma, &sc.field, &path, nsteps)?.defect);
        }
        let h: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        r.push(sc.order_row("ftc-order", "observed order of the FTC defect ≥ 2", &h, &errs, 2.0));
        r.push(sc.at_most(
            "ftc-defect",
            "‖Pt(0)⁻¹U(γ(0)) + ∫Pt⁻¹D_ΓU[γ̇] − U(γ(1))‖ at 512 steps",
            errs[3],
            1e-6,
        ));
        Ok(())
    });
    run_check(&mut report, "parameter-derivative", |r| {
        let mut rng = cfg.rng(6);
        let region = sc.grid.region();
        let mut worst: f64 = 0.0;
        let mut colinear: f64 = 0.0;
        for _ in 0..cfg.sweep.homotopies {
            let a = draw_point(&mut rng, &region);
            let b = draw_point(&mut rng, &region);
            let da = draw_point(&mut rng, &BoxRegion::cube(sc.d(), 0.5));
            let db = draw_point(&mut rng, &BoxRegion::cube(sc.d(), 0.5));
            let h = Homotopy::segment_family(a.clone(), da, b.clone(), db, (0.0, 1.0))?;
            let pd = transport_parameter_derivative(&sc.gamma, &h, 0.5, steps)?;
            worst = worst.max(pd.lhs_norm() / (pd.bound * (1.0 + EPS_DISC) + ABS_SLACK));
            // Endpoints sliding along the line through a and b.
            let e = &b - &a;
            let (sa, sb): (f64, f64) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let line = Homotopy::segment_family(a.clone(), &e * sa, b.clone(), &e * sb, (0.0, 1.0))?;
            colinear = colinear.max(transport_parameter_derivative(&sc.gamma, &line, 0.5, steps)?.lhs_norm());
        }
        r.push(sc.at_most(
            "parameter-derivative",
            "‖d/ds Pt + Γ(γ(0))[∂_sγ]Pt − PtΓ(γ(1))[∂_sγ]‖ / (1.05·∫‖K[∂_sγ, γ̇]‖)",
            worst,
            1.0,
        ));
        r.push(sc.at_most("parameter-derivative-colinear", "same left side for colinear-endpoint homotopies", colinear, 1e-6));
        Ok(())
    });
    report
}

fn random_points<R: Rng>(rng: &mut R, region: &BoxRegion, count: usize) -> Vec<Vector> {
    (0..count).map(|_| draw_point(rng, region)).collect()
}

pub fn check_curvature(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "curvature", cfg.seed);
    let d = sc.d();
    run_check(&mut report, "curvature-oracle", |r| {
        let mut rng = cfg.rng(10);
        let region = sc.grid.region();
        let (mut worst, mut gauge_worst, mut cov_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for x in random_points(&mut rng, &region, cfg.sweep.curvature_points) {
            let (v, w) = random_orthonormal_pair(&mut rng, d);
            let k = sc.gamma.curvature(&x, &v, &w)?;
            let oracle = cfg.connection.curvature_oracle(sc.m(), &x, &v, &w)?;
            worst = worst.max(relative(op_norm(&(k.matrix() - oracle.matrix())), oracle.op_norm()));
            let gd = curvature_gauge_defect(&sc.gamma, &sc.gamma_gauged, &sc.gauge, &x, &v, &w)?;
            gauge_worst = gauge_worst.max(relative(gd, k.op_norm()));
        }
        for x in random_points(&mut rng, &sc.support, cfg.sweep.curvature_points) {
            let du = covariant_derivative(&sc.field, &sc.gamma, &x)?;
            let dup = covariant_derivative(&sc.field_gauged, &sc.gamma_gauged, &x)?;
            let phi = sc.gauge.value(&x)?;
            cov_worst = cov_worst.max(relative(op_norm(&(dup - phi.matrix() * &du)), op_norm(&du)));
        }
        r.push(sc.at_most("curvature-oracle", "‖K(x)[v,w] − closed form‖ (relative)", worst, 1e-6));
        r.push(sc.at_most("curvature-gauge", "‖K′[v,w] − φK[v,w]φ⁻¹‖ (relative)", gauge_worst, 1e-6));
        r.push(sc.at_most("covariant-derivative-gauge", "‖D_Γ′(φU) − φD_ΓU‖ (relative)", cov_worst, 1e-6));
        Ok(())
    });
    run_check(&mut report, "curvature-sup", |r| {
        let sup = curvature_sup_norm(&sc.gamma, &sc.grid.region(), 32)?;
        r.push(sc.finite("curvature-sup", "sampled sup‖K‖ over the working box", sup));
        Ok(())
    });
    run_check(&mut report, "commutator", |r| {
        let slope = commutator_slope(&sc.field, &sc.gamma, &sc.support)?;
        r.push(sc.order_row(
            "commutator-slope",
            "Richardson slope of the commutator defect in [1.7, 2.3]",
            &slope.0,
            &slope.1,
            1.7,
        ));
        if slope.1.iter().any(|e| *e > ROUNDOFF_FLOOR) {
            let order = observed_order(&slope.0, &slope.1);
            r.push(sc.at_most("commutator-slope-upper", "Richardson slope ≤ 2.3", order, 2.3));
        }
        Ok(())
    });
    report
}

/// Step sizes and commutator defects at a generic point of the field's support.
pub fn commutator_slope(u: &Field, gamma: &ConnectionForm, support: &BoxRegion) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = gamma.dim_domain();
    let x = support.from_unit(&(0..d).map(|k| 0.37 + 0.11 * k as f64).collect::<Vec<_>>());
    let mut v = Vector::zeros(d);
    v[0] = 1.0;
    let mut w = Vector::zeros(d);
    w[d - 1] = 1.0;
    let hs = vec![0.04, 0.02, 0.01, 0.005];
    let errs = hs
        .iter()
        .map(|&h| crate::connection::commutator_defect(u, gamma, &x, &v, &w, h))
        .collect::<Result<Vec<_>>>()?;
    Ok((hs, errs))
}

pub fn check_holonomy(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "holonomy", cfg.seed);
    let steps = cfg.steps;
    run_check(&mut report, "holonomy", |r| {
        let mut rng = cfg.rng(20);
        let region = sc.grid.region();
        let (mut worst_ratio, mut worst_defect): (f64, f64) = (0.0, 0.0);
        let mut tri_worst: f64 = 0.0;
        for k in 0..cfg.sweep.triangles {
            let (x, y, z) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region), draw_point(&mut rng, &region));
            let h = holonomy_triangle(&sc.gamma, &x, &y, &z, steps)?;
            worst_ratio = worst_ratio.max(h.defect / (h.bound * (1.0 + EPS_DISC) + ABS_SLACK));
            worst_defect = worst_defect.max(h.defect);
            if k < 100 {
                let (a, b, c) = (
                    draw_point(&mut rng, &sc.support),
                    draw_point(&mut rng, &sc.support),
                    draw_point(&mut rng, &sc.support),
                );
                let t = triangle_difference_bound(&sc.gamma, &sc.field, &a, &b, &c, steps)?;
                tri_worst = tri_worst.max(t.lhs / (t.rhs * (1.0 + EPS_DISC) + ABS_SLACK));
            }
        }
        r.push(sc.at_most(
            "holonomy-bound",
            "‖I − R(x,y)R(y,z)R(z,x)‖ / (1.05·sup‖K‖·area)",
            worst_ratio,
            1.0,
        ));
        if sc.gamma.is_zero() {
            r.push(sc.at_most("holonomy-flat", "holonomy defect of the zero connection", worst_defect, 1e-9));
        }
        r.push(sc.at_most(
            "triangle-difference",
            "‖U(x) − R(x,y)U(y)‖ / (1.05·(two-leg estimate + ‖U(z)‖min{2, sup‖K‖·area}))",
            tri_worst,
            1.0,
        ));
        Ok(())
    });
    if let ConnectionSpec::FluxAbelian { b } = cfg.connection {
        run_check(&mut report, "holonomy-flux", |r| {
            let d = sc.d();
            let e = |i: usize| {
                let mut v = Vector::zeros(d);
                v[i] = 1.0;
                v
            };
            let h = holonomy_triangle(&sc.gamma, &Vector::zeros(d), &e(0), &e(1), cfg.steps.max(256))?;
            let expected = 2.0 * (b.abs() / 4.0).sin();
            r.push(sc.at_most("holonomy-flux-defect", "|defect − 2 sin(|B|/4)| on the unit right triangle", (h.defect - expected).abs(), 1e-6));
            r.push(sc.at_most("holonomy-flux-bound", "|bound − |B|/2| on the unit right triangle", (h.bound - b.abs() / 2.0).abs(), 1e-6));
            Ok(())
        });
    }
    report
}

pub fn check_seminorm(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "seminorm", cfg.seed);
    let params = match cfg.analysis.params() {
        Ok(p) => p,
        Err(e) => {
            report.record_error("seminorm", e);
            return report;
        }
    };
    run_check(&mut report, "seminorm-series", |r| {
        let u = sc.boundary_field()?;
        let gamma_b = Arc::new(sc.gamma.restrict_to_boundary()?);
        let levels = sc.levels()?;
        for &pp in &params {
            let mut series = Vec::new();
            for g in &levels {
                let res = gagliardo_seminorm(&u, &gamma_b, pp, g, cfg.steps)?;
                r.push(
                    sc.finite("seminorm", "p-th power of the covariant Gagliardo seminorm", res.value)
                        .with_params(pp.s, pp.p, None)
                        .with_grid(g.spec.n_lat),
                );
                series.push((g.spec.n_lat, res));
            }
            if let (Some((n0, a)), Some((n1, b))) = (series.first(), series.iter().find(|(nl, _)| *nl == 2 * series[0].0)) {
                r.push(
                    sc.at_most(
                        "seminorm-refinement",
                        &format!("|S(N={n0}) − S(N={n1})| ≤ excluded-shell residual at N={n0}"),
                        (a.value - b.value).abs(),
                        a.residual_bound,
                    )
                    .with_params(pp.s, pp.p, None),
                );
            }
        }
        Ok(())
    });
    run_check(&mut report, "seminorm-gauge", |r| {
        let u = sc.boundary_field()?;
        let up = sc.boundary_field_gauged()?;
        let gamma_b = Arc::new(sc.gamma.restrict_to_boundary()?);
        let gamma_bp = Arc::new(sc.gamma_gauged.restrict_to_boundary()?);
        for &pp in &params {
            let a = gagliardo_seminorm(&u, &gamma_b, pp, &sc.grid, cfg.steps)?.value;
            let b = gagliardo_seminorm(&up, &gamma_bp, pp, &sc.grid, cfg.steps)?.value;
            r.push(
                sc.at_most("seminorm-gauge", "|S(Γ′∥, φu) − S(Γ∥, u)| / S(Γ∥, u)", (a - b).abs() / a.max(f64::MIN_POSITIVE), 1e-6)
                    .with_params(pp.s, pp.p, None),
            );
        }
        Ok(())
    });
    run_check(&mut report, "diamagnetic", |r| {
        let mut rng = cfg.rng(30);
        let pairs: Vec<(Vector, Vector)> = (0..cfg.sweep.diamagnetic_pairs)
            .map(|_| {
                let x = draw_point(&mut rng, &sc.support);
                let mut v = Vector::from_iterator(sc.d(), (0..sc.d()).map(|_| rng.random_range(-1.0..1.0)));
                v /= v.norm().max(1e-12);
                (x, v)
            })
            .collect();
        let (worst, tested) = diamagnetic_defect_at(&sc.field, &sc.gamma, &pairs, 1e-4)?;
        r.push(sc.at_most(
            "diamagnetic",
            &format!("max ‖D‖U‖[v]‖ − ‖D_ΓU[v]‖ over {tested} sampled pairs"),
            worst,
            1e-6,
        ));
        Ok(())
    });
    report
}

fn ratio_spread(series: &[f64]) -> f64 {
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(0.0, f64::max);
    if lo > 0.0 {
        hi / lo - 1.0
    } else if hi == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn push_stability(sc: &Scenario, r: &mut Report, label: &str, reports: &[InequalityReport]) {
    if reports.len() < 2 {
        return;
    }
    let series: Vec<f64> = reports.iter().map(|x| x.ratio).collect();
    let first = &reports[0];
    r.push(
        sc.at_most(
            &format!("{label}-stability"),
            "max/min − 1 of lhs/rhs across lateral grids",
            ratio_spread(&series),
            RATIO_SPREAD,
        )
        .with_params(first.s, first.p, Some(first.beta)),
    );
}

const TRACE_SEMINORM: &str = "|U(·,0)|^p_{s,p} ≤ C∫(‖D_ΓU‖^p + β^{p/2}‖U‖^p)z^α";
const TRACE_LP: &str = "‖U(·,0)‖_p^p ≤ C(∫‖D_ΓU‖^p z^α)^{1−s}(∫‖U‖^p z^α)^s";
const EXT_GRAD: &str = "∫‖D_ΓU‖^p z^α ≤ C(|u|^p_{s,p} + β^{sp/2}‖u‖_p^p)";
const EXT_MASS: &str = "∫‖U‖^p z^α ≤ Cβ^{−(1−s)p/2}‖u‖_p^p";

pub fn check_trace(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "trace-check", cfg.seed);
    run_check(&mut report, "trace-inequalities", |r| {
        let beta = sc.beta()?;
        let levels = sc.levels()?;
        for pp in cfg.analysis.params()? {
            let mut semi = Vec::new();
            let mut lp = Vec::new();
            for g in &levels {
                let [a, b] = trace_inequality_report(Arc::clone(&sc.field), &sc.gamma, pp, beta, g, cfg.steps)?;
                r.push(Row::inequality("trace-seminorm", TRACE_SEMINORM, &a));
                r.push(Row::inequality("trace-lp", TRACE_LP, &b));
                semi.push(a);
                lp.push(b);
            }
            push_stability(sc, r, "trace-seminorm", &semi);
            push_stability(sc, r, "trace-lp", &lp);
            let [a, b] = trace_inequality_report(Arc::clone(&sc.field), &sc.gamma, pp, beta, &sc.grid, cfg.steps)?;
            let [ap, bp] =
                trace_inequality_report(Arc::clone(&sc.field_gauged), &sc.gamma_gauged, pp, beta, &sc.grid, cfg.steps)?;
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
            r.push(
                sc.at_most(
                    "trace-gauge",
                    "relative change of both trace ratios under (Γ, U) → (Γ′, φU)",
                    rel(a.ratio, ap.ratio).max(rel(b.ratio, bp.ratio)),
                    1e-4,
                )
                .with_params(pp.s, pp.p, Some(beta)),
            );
        }
        Ok(())
    });
    report
}

pub fn check_extension(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "extend-check", cfg.seed);
    let beta = match sc.beta() {
        Ok(b) => b,
        Err(e) => {
            report.record_error("extend-check", e);
            return report;
        }
    };
    run_check(&mut report, "extension-inequalities", |r| {
        let u = sc.boundary_field()?;
        let levels = sc.levels()?;
        for params in cfg.analysis.params()? {
            let mut grad = Vec::new();
            let mut mass = Vec::new();
            for g in &levels {
                let ext_cfg = ExtensionConfig { beta, params, grid: g.clone(), steps: cfg.steps };
                let ([a, b], ext) = extension_inequality_report(&u, &sc.gamma, &ext_cfg)?;
                r.push(Row::inequality("extension-gradient", EXT_GRAD, &a));
                r.push(Row::inequality("extension-mass", EXT_MASS, &b));
                grad.push(a);
                mass.push(b);
                if cfg.output.dump_fields {
                    let dir = &cfg.output.dir;
                    std::fs::create_dir_all(dir)?;
                    let name = format!("extension-p{}-n{}.bin", params.p, g.spec.n_lat);
                    crate::io::save_field(&dir.join(name), &ext.field())?;
                }
            }
            push_stability(sc, r, "extension-gradient", &grad);
            push_stability(sc, r, "extension-mass", &mass);
        }
        Ok(())
    });
    let params = match cfg.analysis.params() {
        Ok(p) => p[0],
        Err(e) => {
            report.record_error("extend-check", e);
            return report;
        }
    };
    let ext_cfg = ExtensionConfig { beta, params, grid: sc.grid.clone(), steps: cfg.steps };
    run_check(&mut report, "extension-round-trip", |r| {
        let u = sc.boundary_field()?;
        let ext = extend(&u, &sc.gamma, &ext_cfg)?;
        let back = trace(ext.field())?;
        let nodes = sc.grid.boundary_tensor();
        let mut worst: f64 = 0.0;
        for a in 0..nodes.len() {
            let x = nodes.node(a);
            worst = worst.max((back.value(&x)? - u.value(&x)?).norm());
        }
        r.push(sc.at_most("extension-round-trip", "max ‖Tr(Ext u) − u‖ at boundary nodes", worst, 1e-8));
        Ok(())
    });
    run_check(&mut report, "extension-linearity", |r| {
        let u1 = sc.boundary_field()?;
        let u2 = sc.boundary_field_gauged()?;
        let sum = BoundaryField::new(Field::combination(vec![
            (1.0, Arc::new(u1.field().clone())),
            (2.0, Arc::new(u2.field().clone())),
        ])?);
        let (e1, e2, es) = (extend(&u1, &sc.gamma, &ext_cfg)?, extend(&u2, &sc.gamma, &ext_cfg)?, extend(&sum, &sc.gamma, &ext_cfg)?);
        let worst = es
            .data
            .iter()
            .zip(e1.data.iter().zip(&e2.data))
            .map(|(s, (a, b))| (s - (a + 2.0 * b)).abs())
            .fold(0.0, f64::max);
        r.push(sc.at_most("extension-linearity", "max |Ext(u₁ + 2u₂) − Ext u₁ − 2 Ext u₂| at nodes", worst, 1e-12));
        Ok(())
    });
    run_check(&mut report, "extension-attainment", |r| {
        let u = sc.boundary_field()?;
        let mut heights = Vec::new();
        let mut errs = Vec::new();
        for nv in [16usize, 32, 64] {
            let g = sc.grid.with_vertical(nv, sc.grid.spec.grading)?;
            let ext = extend(&u, &sc.gamma, &ExtensionConfig { grid: g, ..ext_cfg.clone() })?;
            heights.push(ext.first_layer_height());
            errs.push(ext.layer_error(1));
        }
        r.push(sc.order_row(
            "extension-attainment",
            "observed order of max‖U(·,z₁) − u‖ in z₁ ≥ 1",
            &heights,
            &errs,
            1.0,
        ));
        Ok(())
    });
    run_check(&mut report, "extension-gauge", |r| {
        let u = sc.boundary_field()?;
        let up = sc.boundary_field_gauged()?;
        let a = extend(&u, &sc.gamma, &ext_cfg)?;
        let b = extend(&up, &sc.gamma_gauged, &ext_cfg)?;
        let grid = sc.grid.tensor();
        let m = sc.m();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..grid.len() {
            let phi = sc.gauge.value(&grid.node(k))?;
            let va = Vector::from_column_slice(&a.data[k * m..(k + 1) * m]);
            let vb = Vector::from_column_slice(&b.data[k * m..(k + 1) * m]);
            worst = worst.max((vb - phi.apply(&va)).norm());
            scale = scale.max(va.norm());
        }
        r.push(sc.at_most(
            "extension-gauge",
            "max ‖Ext′(φ∥u) − φ·Ext(u)‖ / max‖Ext(u)‖ at nodes",
            worst / scale.max(f64::MIN_POSITIVE),
            1e-6,
        ));
        Ok(())
    });
    report
}

pub fn check_pullback(sc: &Scenario) -> Report {
    let cfg = &sc.cfg;
    let mut report = Report::new(&cfg.name, "pullback-check", cfg.seed);
    let d = sc.d();
    for spec in &cfg.charts {
        let label = format!("pullback-{}", chart_label(spec));
        run_check(&mut report, &label, |r| {
            let chart = Chart::from_spec(spec, d)?;
            let pulled = sc.gamma.pullback(chart.clone())?;
            let composed = Field::composed(Arc::clone(&sc.field), chart.clone())?;
            let mut rng = cfg.rng(40);
            let probe = BoxRegion::new(
                (0..d).map(|k| if k + 1 == d { 0.0 } else { -1.0 }).collect(),
                vec![1.0; d],
            )?;
            let mut worst: f64 = 0.0;
            for x in random_points(&mut rng, &probe, cfg.sweep.curvature_points) {
                let lhs = covariant_derivative(&composed, &pulled, &x)?;
                let rhs = covariant_derivative(&sc.field, &sc.gamma, &chart.map(&x)?)? * chart.jacobian(&x)?;
                worst = worst.max(relative(op_norm(&(&lhs - &rhs)), op_norm(&rhs)));
            }
            r.push(sc.at_most(&label, "‖D_{ψ*Γ}(U∘ψ) − (D_ΓU∘ψ)Dψ‖ (relative)", worst, 1e-6));
            Ok(())
        });
    }
    report
}

fn chart_label(spec: &crate::connection::ChartSpec) -> &'static str {
    use crate::connection::ChartSpec;
    match spec {
        ChartSpec::Identity => "identity",
        ChartSpec::Dilation { .. } => "dilation",
        ChartSpec::Rotation { .. } => "rotation",
        ChartSpec::Shear { .. } => "shear",
    }
}

/// Runs one subcommand on a validated scenario.
pub fn run(command: &str, cfg: ScenarioConfig) -> Result<Report> {
    let sc = Scenario::new(cfg)?;
    let mut report = Report::new(&sc.cfg.name, command, sc.cfg.seed);
    let parts: Vec<fn(&Scenario) -> Report> = match command {
        "transport" => vec![check_transport],
        "curvature" => vec![check_curvature],
        "holonomy" => vec![check_holonomy],
        "seminorm" => vec![check_seminorm],
        "trace-check" => vec![check_trace],
        "extend-check" => vec![check_extension],
        "pullback-check" => vec![check_pullback],
        "suite" => vec![
            check_transport,
            check_curvature,
            check_holonomy,
            check_seminorm,
            check_trace,
            check_extension,
            check_pullback,
        ],
        other => return Err(Error::config("command", format!("unknown subcommand `{other}`"))),
    };
    for part in parts {
        report.extend(part(&sc));
    }
    Ok(report)
}

/// Parses `args`, runs, writes the report and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let Some(run_args) = cli.command.args() else {
        for name in crate::config::preset_names() {
            println!("{name}");
        }
        return EXIT_PASS;
    };
    let cfg = match load_config(run_args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let out = cfg.output.dir.clone();
    let report = match run(cli.command.name(), cfg) {
        Ok(r) => r,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VIOLATION;
        }
    };
    if let Err(e) = report.write_to(&out) {
        eprintln!("error: writing report to {}: {e}", out.display());
        return EXIT_USAGE;
    }
    for row in report.failures() {
        eprintln!("FAIL {}: {} (lhs {:e}, rhs {:e})", row.check, row.property, row.lhs, row.rhs);
    }
    for err in &report.errors {
        eprintln!("ERROR {err}");
    }
    println!(
        "{} {}: {} rows, {} failed, {} errors -> {}",
        report.scenario,
        report.command,
        report.rows.len(),
        report.failures().count(),
        report.errors.len(),
        out.display()
    );
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    }
}
