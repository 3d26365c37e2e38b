use std::sync::Arc;

use gaugetrace::connection::{ConnectionForm, Field, ScalarFn};
use gaugetrace::grid::{HalfSpaceGrid, QuadratureSpec};
use gaugetrace::lie::{expm, op_norm, Matrix, SkewMap, Vector};
use gaugetrace::registry::{ConnectionSpec, FieldSpec, GaugeSpec};
use gaugetrace::sobolev::{gagliardo_seminorm, BoundaryField, GagliardoParams};
use gaugetrace::trace_ext::{extend, ExtensionConfig};
use gaugetrace::transport::{transport_path, transport_segment, Path};
use proptest::prelude::*;

fn skew3() -> impl Strategy<Value = SkewMap> {
    prop::array::uniform3(-4.0..4.0f64).prop_map(SkewMap::from_axial)
}

fn point(d: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-1.5..1.5f64, d).prop_map(Vector::from_vec)
}

fn affine_so3() -> impl Strategy<Value = Arc<ConnectionForm>> {
    (prop::array::uniform2(prop::array::uniform3(-1.0..1.0f64)), prop::array::uniform4(prop::array::uniform3(-0.5..0.5f64)))
        .prop_map(|(base, slopes)| {
            ConnectionSpec::AffineSo3 {
                base: base.to_vec(),
                slopes: vec![vec![slopes[0], slopes[1]], vec![slopes[2], slopes[3]]],
            }
            .build(2, 3)
            .unwrap()
        })
}

fn small_grid() -> HalfSpaceGrid {
    HalfSpaceGrid::new(1, 2.6, 1.0, QuadratureSpec::new(16, 8, 2.0, 1).unwrap()).unwrap()
}

fn bump(amplitude: [f64; 2], center: f64) -> BoundaryField {
    FieldSpec::GaussianBump { amplitude: amplitude.to_vec(), center: vec![center], width: 0.4, radius: 0.7 }.build_boundary(1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_is_special_orthogonal(a in skew3()) {
        let q = expm(&a);
        prop_assert!(q.ortho_defect() < 1e-12);
        prop_assert!((q.matrix().determinant() - 1.0).abs() < 1e-12);
        let back = expm(&a.scale(-1.0));
        prop_assert!(op_norm(&(q.matrix() * back.matrix() - Matrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn transport_is_isometric(gamma in affine_so3(), x in point(2), y in point(2), z in point(2)) {
        let path = Path::piecewise_linear(vec![x, y, z]).unwrap();
        let r = transport_path(&gamma, &path, 128).unwrap();
        prop_assert!(r.ortho_defect <= 1e-10);
        prop_assert!(r.samples.iter().all(|(_, p)| p.ortho_defect() <= 1e-10));
    }

    #[test]
    fn segment_transport_reverses(gamma in affine_so3(), x in point(2), y in point(2)) {
        let there = transport_segment(&gamma, &x, &y, 256).unwrap();
        let back = transport_segment(&gamma, &y, &x, 256).unwrap();
        prop_assert!(op_norm(&(there.matrix() * back.matrix() - Matrix::identity(3, 3))) < 1e-9);
    }

    #[test]
    fn abelian_curvature_is_gauge_invariant(b in -2.0..2.0f64, k in prop::array::uniform2(-2.0..2.0f64), x in point(2)) {
        let gamma = ConnectionSpec::FluxAbelian { b }.build(2, 2).unwrap();
        let gauge = GaugeSpec::Phase { theta: ScalarFn::Wave { amplitude: 0.7, wavevector: k.to_vec(), phase: 0.3 } }
            .build(2)
            .unwrap();
        let gp = gamma.gauge_transform(gauge).unwrap();
        let e0 = Vector::from_vec(vec![1.0, 0.0]);
        let e1 = Vector::from_vec(vec![0.0, 1.0]);
        let a = gamma.curvature(&x, &e0, &e1).unwrap();
        let c = gp.curvature(&x, &e0, &e1).unwrap();
        prop_assert!(op_norm(&(a.matrix() - c.matrix())) < 1e-6 * (1.0 + b.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn seminorm_scales_with_power_p(lambda in -3.0..3.0f64, p in 1.5..3.5f64) {
        let grid = small_grid();
        let gamma = ConnectionSpec::FluxAbelian { b: 0.8 }.build(2, 2).unwrap();
        let gamma_b = Arc::new(gamma.restrict_to_boundary().unwrap());
        let params = GagliardoParams::critical(p).unwrap();
        let u = bump([1.0, -0.5], 0.1);
        let scaled = BoundaryField::new(Field::combination(vec![(lambda, Arc::new(u.field().clone()))]).unwrap());
        let a = gagliardo_seminorm(&u, &gamma_b, params, &grid, 64).unwrap().value;
        let b = gagliardo_seminorm(&scaled, &gamma_b, params, &grid, 64).unwrap().value;
        prop_assert!((b - lambda.abs().powf(p) * a).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn extension_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -0.2..0.2f64) {
        let grid = small_grid();
        let gamma = ConnectionSpec::FluxAbelian { b: 0.8 }.build(2, 2).unwrap();
        let cfg = ExtensionConfig { beta: 1.0, params: GagliardoParams::critical(2.0).unwrap(), grid, steps: 32 };
        let u1 = bump([1.0, 0.2], c);
        let u2 = bump([-0.3, 0.9], -c);
        let sum = BoundaryField::new(
            Field::combination(vec![(a, Arc::new(u1.field().clone())), (b, Arc::new(u2.field().clone()))]).unwrap(),
        );
        let (e1, e2, es) = (extend(&u1, &gamma, &cfg).unwrap(), extend(&u2, &gamma, &cfg).unwrap(), extend(&sum, &gamma, &cfg).unwrap());
        for (s, (x, y)) in es.data.iter().zip(e1.data.iter().zip(&e2.data)) {
            prop_assert!((s - (a * x + b * y)).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}
