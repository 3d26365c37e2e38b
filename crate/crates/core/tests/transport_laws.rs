use std::sync::Arc;

use gaugetrace::connection::{AnalyticField, ConnectionForm, Field, GaugeField, Profile, ScalarFn, Window};
use gaugetrace::lie::{op_norm, so3_generator, Vector};
use gaugetrace::numerics::observed_order;
use gaugetrace::transport::{
    ftc_reconstruct, segment_gauge_defect, transport_gauge_defect, transport_parameter_derivative, Homotopy, Path,
};

fn v(a: &[f64]) -> Vector {
    Vector::from_column_slice(a)
}

fn affine_so3() -> ConnectionForm {
    ConnectionForm::affine(
        vec![so3_generator(0).scale(0.6), so3_generator(1).scale(-0.4)],
        vec![
            vec![so3_generator(2).scale(0.8), so3_generator(1).scale(0.3)],
            vec![so3_generator(0).scale(-0.5), so3_generator(2).scale(0.7)],
        ],
    )
    .unwrap()
}

fn bump3() -> Field {
    Field::analytic(
        2,
        AnalyticField {
            profile: Profile::Gaussian { amplitude: vec![1.0, -0.4, 0.7], center: vec![0.3, 0.2], width: 0.6 },
            window: Some(Window { center: vec![0.3, 0.3], radius: 1.5 }),
        },
    )
}

#[test]
fn parameter_derivative_identity_non_abelian() {
    let g = affine_so3();
    let h = Homotopy::segment_family(v(&[0.0, 0.1]), v(&[0.2, -0.3]), v(&[0.8, 0.5]), v(&[-0.1, 0.6]), (-1.0, 1.0)).unwrap();
    let pd = transport_parameter_derivative(&g, &h, 0.2, 256).unwrap();
    let gap = op_norm(&(&pd.lhs - &pd.rhs));
    assert!(gap < 1e-7, "identity gap {gap}");
    assert!(pd.holds());
}

#[test]
fn ftc_converges_on_polygon() {
    let g = affine_so3();
    let u = bump3();
    let path = Path::piecewise_linear(vec![v(&[0.0, 0.0]), v(&[0.6, 0.1]), v(&[0.4, 0.7])]).unwrap();
    let steps = [16usize, 32, 64];
    let errs: Vec<f64> = steps.iter().map(|s| ftc_reconstruct(&g, &u, &path, *s).unwrap().defect).collect();
    let hs: Vec<f64> = steps.iter().map(|s| 1.0 / *s as f64).collect();
    assert!(observed_order(&hs, &errs) > 3.0, "{errs:?}");
    assert!(ftc_reconstruct(&g, &u, &path, 512).unwrap().defect < 1e-8);
}

#[test]
fn transport_gauge_laws() {
    let g = Arc::new(affine_so3());
    let gauge = GaugeField::exp_product(vec![
        (ScalarFn::Wave { amplitude: 0.9, wavevector: vec![1.0, 0.5], phase: 0.1 }, so3_generator(0)),
        (ScalarFn::Affine { offset: 0.2, gradient: vec![0.3, -0.7] }, so3_generator(2)),
    ])
    .unwrap();
    let gp = g.gauge_transform(gauge.clone()).unwrap();
    let path = Path::segment(v(&[0.1, 0.2]), v(&[0.9, -0.3])).unwrap();
    assert!(transport_gauge_defect(&g, &gp, &gauge, &path, 256).unwrap() < 1e-8);
    assert!(segment_gauge_defect(&g, &gp, &gauge, &v(&[0.1, 0.2]), &v(&[-0.5, 0.6]), 256).unwrap() < 1e-8);
}
