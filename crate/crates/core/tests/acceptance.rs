//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use gaugetrace::cli::{
    check_curvature, check_extension, check_holonomy, check_pullback, check_seminorm, check_trace, check_transport,
    Scenario,
};
use gaugetrace::config::{preset_names, ScenarioConfig};
use gaugetrace::connection::{covariant_derivative, curvature_gauge_defect, random_orthonormal_pair, Field};
use gaugetrace::lie::{expm, op_norm, Matrix, SkewMap, Vector};
use gaugetrace::numerics::BoxRegion;
use gaugetrace::registry::{draw_connection, draw_constant, draw_gauge, draw_point, ConnectionSpec, FieldSpec};
use gaugetrace::report::{Report, Row};
use gaugetrace::transport::{
    holonomy_triangle, segment_gauge_defect, transport_gauge_defect, transport_path, transport_segment, Path,
    ABS_SLACK, EPS_DISC,
};
use gaugetrace::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<(bool, String)>;

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(20240611);
    r.set_stream(stream);
    r
}

/// Suite reports for every preset, computed once.
struct Presets {
    reports: Vec<Report>,
}

impl Presets {
    fn load() -> Result<Self> {
        let mut reports = Vec::new();
        for name in preset_names() {
            let sc = Scenario::new(ScenarioConfig::preset(name)?)?;
            let mut report = Report::new(name, "acceptance", sc.cfg.seed);
            for part in [
                check_transport,
                check_curvature,
                check_holonomy,
                check_seminorm,
                check_trace,
                check_extension,
                check_pullback,
            ] {
                report.extend(part(&sc));
            }
            reports.push(report);
        }
        Ok(Presets { reports })
    }

    /// Rows whose check name satisfies `pred`, with any recorded errors.
    fn verdict(&self, pred: impl Fn(&str) -> bool, prefixes: &[&str]) -> Verdict {
        let mut ok = true;
        let mut parts = Vec::new();
        for rep in &self.reports {
            let rows: Vec<&Row> = rep.rows.iter().filter(|r| pred(&r.check)).collect();
            let errors: Vec<&String> = rep
                .errors
                .iter()
                .filter(|e| prefixes.iter().any(|p| e.starts_with(p)))
                .collect();
            if rows.is_empty() && errors.is_empty() {
                continue;
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            ok &= failed == 0 && errors.is_empty();
            let worst = rows
                .iter()
                .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                .map(|r| format!("{} {:.3e}/{:.3e}", r.check, r.lhs, r.rhs))
                .unwrap_or_default();
            parts.push(format!("{}: {} rows, {failed} failed, worst {worst}", rep.scenario, rows.len()));
            for e in errors {
                parts.push(format!("{}: error {e}", rep.scenario));
            }
        }
        if parts.is_empty() {
            return Ok((false, "no rows".into()));
        }
        Ok((ok, parts.join("; ")))
    }
}

fn unit_box(d: usize) -> BoxRegion {
    BoxRegion::cube(d, 1.0)
}

fn dims(k: usize) -> (usize, usize) {
    (2 + k % 2, 2 + (k / 2) % 2)
}

fn criterion_1() -> Verdict {
    let mut rng = rng(1);
    let (mut ortho, mut colinear): (f64, f64) = (0.0, 0.0);
    for k in 0..200 {
        let (d, m) = dims(k);
        let gamma = draw_connection(&mut rng, d, m).build(d, m)?;
        let region = unit_box(d);
        let path = if k % 3 == 0 {
            Path::segment(draw_point(&mut rng, &region), draw_point(&mut rng, &region))?
        } else {
            Path::piecewise_linear((0..4).map(|_| draw_point(&mut rng, &region)).collect())?
        };
        ortho = ortho.max(transport_path(&gamma, &path, 256)?.ortho_defect);
        let x = draw_point(&mut rng, &region);
        let y = draw_point(&mut rng, &region);
        let t: f64 = rng.random_range(-0.5..1.5);
        let z = &x + (&y - &x) * t;
        let loop_op = transport_segment(&gamma, &x, &y, 1024)?.matrix()
            * transport_segment(&gamma, &y, &z, 1024)?.matrix()
            * transport_segment(&gamma, &z, &x, 1024)?.matrix();
        colinear = colinear.max(op_norm(&(loop_op - Matrix::identity(m, m))));
    }
    Ok((
        ortho <= 1e-10 && colinear <= 1e-9,
        format!("200 draws: max ortho defect {ortho:.2e} (≤ 1e-10), max colinear loop {colinear:.2e} (≤ 1e-9)"),
    ))
}

fn criterion_2() -> Verdict {
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (d, m) = dims(k);
        let gamma = draw_constant(&mut rng, d, m, 0.5)?;
        let region = unit_box(d);
        let (x, y) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region));
        let r = transport_segment(&gamma, &x, &y, 256)?;
        let oracle = expm(&gamma.eval(&x, &(&y - &x))?);
        worst = worst.max(op_norm(&(r.matrix() - oracle.matrix())));
    }
    Ok((worst <= 1e-10, format!("50 constant connections, 256 steps: max ‖R − exp(Γ[y−x])‖ {worst:.2e} (≤ 1e-10)")))
}

fn criterion_3() -> Verdict {
    let mut rng = rng(3);
    let mut worst: f64 = 0.0;
    for b in [0.5, 1.0, 2.0] {
        for d in [2usize, 3] {
            let gamma = ConnectionSpec::FluxAbelian { b }.build(d, 2)?;
            let region = BoxRegion::cube(d, 1.5);
            for _ in 0..20 {
                let (x, y) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region));
                // Circulation of A = B/2(−x₂, x₁) along the segment from x to y.
                let circulation = 0.5 * b * (x[0] * y[1] - x[1] * y[0]);
                let oracle = expm(&SkewMap::planar(circulation));
                let r = transport_segment(&gamma, &x, &y, 512)?;
                worst = worst.max(op_norm(&(r.matrix() - oracle.matrix())));
            }
        }
    }
    Ok((worst <= 1e-8, format!("B ∈ {{0.5, 1, 2}}, 120 segments: max deviation from the phase oracle {worst:.2e} (≤ 1e-8)")))
}

fn registry_connections(d: usize) -> Vec<ConnectionSpec> {
    let mut rng = rng(40 + d as u64);
    let axial = |s: f64, k: usize| [s * (0.3 + 0.1 * k as f64), -0.4 * s, 0.2 * s];
    vec![
        ConnectionSpec::Zero,
        ConnectionSpec::ConstantAbelian { a: (0..d).map(|k| 0.7 - 0.5 * k as f64).collect() },
        ConnectionSpec::FluxAbelian { b: 1.3 },
        ConnectionSpec::ConstantSo3 { generators: (0..d).map(|k| axial(1.0, k)).collect() },
        ConnectionSpec::AffineSo3 {
            base: (0..d).map(|k| axial(0.8, k)).collect(),
            slopes: (0..d).map(|i| (0..d).map(|j| axial(0.5, i + 2 * j)).collect()).collect(),
        },
        ConnectionSpec::GaugeWrapped {
            inner: Box::new(ConnectionSpec::FluxAbelian { b: -0.9 }),
            gauge: draw_gauge(&mut rng, d, 2),
        },
        ConnectionSpec::GaugeWrapped {
            inner: Box::new(ConnectionSpec::AffineSo3 {
                base: (0..d).map(|k| axial(0.6, k)).collect(),
                slopes: (0..d).map(|i| (0..d).map(|j| axial(-0.4, i + j)).collect()).collect(),
            }),
            gauge: draw_gauge(&mut rng, d, 3),
        },
    ]
}

fn fiber_of(spec: &ConnectionSpec) -> usize {
    match spec {
        ConnectionSpec::ConstantSo3 { .. } | ConnectionSpec::AffineSo3 { .. } => 3,
        ConnectionSpec::GaugeWrapped { inner, .. } => fiber_of(inner),
        _ => 2,
    }
}

fn criterion_4() -> Verdict {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in [2usize, 3] {
        for spec in registry_connections(d) {
            let gamma = spec.build(d, fiber_of(&spec))?;
            let region = unit_box(d);
            for _ in 0..500 {
                let (x, y, z) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region), draw_point(&mut rng, &region));
                let h = holonomy_triangle(&gamma, &x, &y, &z, 256)?;
                worst = worst.max(h.defect / (h.bound * (1.0 + EPS_DISC) + ABS_SLACK));
            }
            count += 1;
        }
    }
    let gamma = ConnectionSpec::FluxAbelian { b: 1.0 }.build(2, 2)?;
    let e = |a: f64, b: f64| Vector::from_vec(vec![a, b]);
    let h = holonomy_triangle(&gamma, &e(0.0, 0.0), &e(1.0, 0.0), &e(0.0, 1.0), 512)?;
    let defect_err = (h.defect - 2.0 * 0.25f64.sin()).abs();
    let bound_err = (h.bound - 0.5).abs();
    Ok((
        worst <= 1.0 && defect_err <= 1e-6 && bound_err <= 1e-6,
        format!(
            "{count} connections × 500 triangles: max defect/(1.05·bound + {ABS_SLACK:e}) {worst:.4}; \
             unit triangle B=1: defect {:.7} (|Δ| {defect_err:.1e}), bound {:.7} (|Δ| {bound_err:.1e})",
            h.defect, h.bound
        ),
    ))
}

fn criterion_5(presets: &Presets) -> Verdict {
    let mut rng = rng(5);
    let (mut seg, mut path, mut curv, mut cov): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..40 {
        let (d, m) = dims(k);
        let gamma = draw_connection(&mut rng, d, m).build(d, m)?;
        let gauge = draw_gauge(&mut rng, d, m).build(m)?;
        let gamma_p = Arc::new(gamma.gauge_transform(gauge.clone())?);
        let region = unit_box(d);
        let (x, y) = (draw_point(&mut rng, &region), draw_point(&mut rng, &region));
        seg = seg.max(segment_gauge_defect(&gamma, &gamma_p, &gauge, &x, &y, 512)?);
        let p = Path::piecewise_linear((0..3).map(|_| draw_point(&mut rng, &region)).collect())?;
        path = path.max(transport_gauge_defect(&gamma, &gamma_p, &gauge, &p, 512)?);
        let (v, w) = random_orthonormal_pair(&mut rng, d);
        let k_norm = gamma.curvature(&x, &v, &w)?.op_norm();
        curv = curv.max(curvature_gauge_defect(&gamma, &gamma_p, &gauge, &x, &v, &w)? / k_norm.max(1.0));
        let field = Arc::new(
            FieldSpec::GaussianBump {
                amplitude: (0..m).map(|i| 1.0 - 0.4 * i as f64).collect(),
                center: vec![0.1; d],
                width: 0.6,
                radius: 0.9,
            }
            .build(d),
        );
        let field_p = Field::gauged(Arc::clone(&field), gauge.clone())?;
        let du = covariant_derivative(&field, &gamma, &x)?;
        let dup = covariant_derivative(&field_p, &gamma_p, &x)?;
        let phi = gauge.value(&x)?;
        cov = cov.max(op_norm(&(dup - phi.matrix() * &du)) / op_norm(&du).max(1.0));
    }
    let laws = ["transport-gauge", "segment-gauge", "curvature-gauge", "covariant-derivative-gauge", "seminorm-gauge", "extension-gauge"];
    let (preset_ok, preset_detail) = presets.verdict(|c| laws.contains(&c), &["transport-gauge", "curvature-oracle", "seminorm-gauge", "extension-gauge"])?;
    let draws_ok = seg.max(path).max(curv).max(cov) <= 1e-6;
    Ok((
        draws_ok && preset_ok,
        format!(
            "40 registry gauge pairs: segment {seg:.1e}, path {path:.1e}, curvature {curv:.1e}, D_Γ {cov:.1e} (≤ 1e-6); presets [{preset_detail}]"
        ),
    ))
}

fn row_filter<'a>(names: &'a [&'a str]) -> impl Fn(&str) -> bool + 'a {
    move |c: &str| names.contains(&c)
}

fn criterion_10(presets: &Presets) -> Verdict {
    presets.verdict(
        row_filter(&["extension-linearity", "extension-round-trip", "extension-attainment"]),
        &["extension-linearity", "extension-round-trip", "extension-attainment"],
    )
}

fn criterion_11(presets: &Presets) -> Verdict {
    let (ok, detail) = presets.verdict(|c| c.ends_with("-stability"), &["trace-inequalities", "extension-inequalities"])?;
    let labels = ["trace-seminorm", "trace-lp", "extension-gradient", "extension-mass"];
    let series: Vec<f64> = presets
        .reports
        .iter()
        .flat_map(|rep| rep.rows.iter())
        .filter(|r| labels.contains(&r.check.as_str()))
        .map(|r| r.ratio)
        .collect();
    let finite = series.iter().all(|r| r.is_finite() && *r >= 0.0);
    let spread = presets
        .reports
        .iter()
        .flat_map(|rep| rep.rows.iter().filter(|r| r.check.ends_with("-stability")).map(|r| r.lhs))
        .fold(0.0, f64::max);
    Ok((
        ok && finite && !series.is_empty(),
        format!("{} ratios, all finite: {finite}, worst spread {:.1}% (≤ 10%); {detail}", series.len(), 100.0 * spread),
    ))
}

type Criterion<'a> = (&'a str, Box<dyn FnOnce() -> Verdict + 'a>);

fn main() {
    let start = Instant::now();
    let presets = match Presets::load() {
        Ok(p) => p,
        Err(e) => {
            println!("acceptance: could not build preset scenarios: {e}");
            std::process::exit(1);
        }
    };
    println!("preset suites ({}) built in {:.1} s", preset_names().join(", "), start.elapsed().as_secs_f64());
    let p = &presets;
    let criteria: Vec<Criterion> = vec![
        ("isometry and colinearity", Box::new(criterion_1)),
        ("constant-connection oracle", Box::new(criterion_2)),
        ("abelian oracle", Box::new(criterion_3)),
        ("holonomy bound", Box::new(criterion_4)),
        ("gauge covariance", Box::new(|| criterion_5(p))),
        ("FTC reconstruction", Box::new(|| p.verdict(row_filter(&["ftc-order", "ftc-defect"]), &["ftc"]))),
        (
            "commutator identity",
            Box::new(|| {
                let sel = Presets {
                    reports: p.reports.iter().filter(|r| r.scenario != "zero-n1").cloned().collect(),
                };
                sel.verdict(row_filter(&["commutator-slope", "commutator-slope-upper"]), &["commutator"])
            }),
        ),
        ("diamagnetic inequality", Box::new(|| p.verdict(row_filter(&["diamagnetic"]), &["diamagnetic"]))),
        (
            "parameter-derivative bound",
            Box::new(|| {
                p.verdict(
                    row_filter(&["parameter-derivative", "parameter-derivative-colinear"]),
                    &["parameter-derivative"],
                )
            }),
        ),
        ("extension correctness", Box::new(|| criterion_10(p))),
        ("trace/extension ratio stability", Box::new(|| criterion_11(p))),
        ("pullback compatibility", Box::new(|| p.verdict(|c| c.starts_with("pullback-"), &["pullback-"]))),
    ];
    let mut failed = 0;
    for (k, (title, f)) in criteria.into_iter().enumerate() {
        let t0 = Instant::now();
        let (ok, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {title} [{:.1} s]: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of 12 criteria passed in {:.1} s", 12 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
