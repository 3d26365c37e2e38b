//! Small-matrix kernels for the orthogonal group O(m) and its algebra o(m).
//!
//! Fibers are tiny (m = 2..4), so everything is dense `DMatrix<f64>` and the
//! exponential uses closed forms for m <= 3 and Padé(6) scaling-and-squaring
//! above that.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Tolerance used when validating skew-symmetry of user input.
pub const SKEW_TOL: f64 = 1e-12;
/// Default orthogonality tolerance carried by every [`OrthoOp`].
pub const ORTHO_TOL: f64 = 1e-10;

/// Skew-symmetric endomorphism of the fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewMap(Matrix);

impl SkewMap {
    /// Validates skew-symmetry relative to the matrix scale.
    pub fn new(entries: Matrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let defect = skew_defect(&entries);
        if defect > SKEW_TOL * entries.amax().max(1.0) {
            return Err(Error::NotSkew { defect });
        }
        Ok(SkewMap(skew_part_matrix(&entries)))
    }

    /// Projects an arbitrary square matrix onto o(m) by `(a - aᵀ)/2`.
    pub fn skew_part(a: &Matrix) -> Self {
        SkewMap(skew_part_matrix(a))
    }

    pub fn zero(m: usize) -> Self {
        SkewMap(Matrix::zeros(m, m))
    }

    /// Builds the m×m skew matrix from its strictly-upper entries, row by row.
    pub fn from_upper(m: usize, upper: &[f64]) -> Result<Self> {
        let expected = m * (m.saturating_sub(1)) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: upper.len(),
            });
        }
        let mut a = Matrix::zeros(m, m);
        let mut k = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                a[(i, j)] = upper[k];
                a[(j, i)] = -upper[k];
                k += 1;
            }
        }
        Ok(SkewMap(a))
    }

    /// so(3) element with axial vector ω, i.e. `ω₁L₁ + ω₂L₂ + ω₃L₃`.
    pub fn from_axial(omega: [f64; 3]) -> Self {
        let [a, b, c] = omega;
        SkewMap(Matrix::from_row_slice(
            3,
            3,
            &[0.0, -c, b, c, 0.0, -a, -b, a, 0.0],
        ))
    }

    /// The planar generator `θ·J`, `J = [[0,-1],[1,0]]` (multiplication by iθ on ℂ ≅ ℝ²).
    pub fn planar(theta: f64) -> Self {
        SkewMap(Matrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scale(&self, f: f64) -> Self {
        SkewMap(&self.0 * f)
    }

    pub fn add(&self, other: &SkewMap) -> Self {
        SkewMap(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SkewMap) -> Self {
        SkewMap(&self.0 - &other.0)
    }

    /// Conjugation `g a gᵀ` by an orthogonal operator.
    pub fn conjugate(&self, g: &OrthoOp) -> Self {
        SkewMap::skew_part(&(g.matrix() * &self.0 * g.matrix().transpose()))
    }

    pub fn op_norm(&self) -> f64 {
        op_norm(&self.0)
    }
}

/// Standard so(3) generator `L_i` (i in 0..3), satisfying `[L₁, L₂] = L₃` cyclically.
pub fn so3_generator(i: usize) -> SkewMap {
    let mut w = [0.0; 3];
    w[i % 3] = 1.0;
    SkewMap::from_axial(w)
}

/// Orthogonal operator on the fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoOp {
    mat: Matrix,
    tol: f64,
}

impl OrthoOp {
    pub fn new(mat: Matrix) -> Result<Self> {
        Self::with_tolerance(mat, ORTHO_TOL)
    }

    pub fn with_tolerance(mat: Matrix, tol: f64) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        let defect = ortho_defect(&mat);
        if defect > tol {
            return Err(Error::NotOrthogonal {
                defect,
                tolerance: tol,
            });
        }
        Ok(OrthoOp { mat, tol })
    }

    pub(crate) fn from_trusted(mat: Matrix) -> Self {
        OrthoOp { mat, tol: ORTHO_TOL }
    }

    pub fn identity(m: usize) -> Self {
        OrthoOp::from_trusted(Matrix::identity(m, m))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Inverse, which for an orthogonal operator is the transpose.
    pub fn inverse(&self) -> Self {
        OrthoOp {
            mat: self.mat.transpose(),
            tol: self.tol,
        }
    }

    pub fn compose(&self, other: &OrthoOp) -> Self {
        OrthoOp {
            mat: &self.mat * &other.mat,
            tol: self.tol.max(other.tol),
        }
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.mat * v
    }

    /// `op_norm(PᵀP − I)`.
    pub fn ortho_defect(&self) -> f64 {
        ortho_defect(&self.mat)
    }
}

fn skew_part_matrix(a: &Matrix) -> Matrix {
    (a - a.transpose()) * 0.5
}

fn skew_defect(a: &Matrix) -> f64 {
    (a + a.transpose()).amax()
}

/// `op_norm(aᵀa − I)`.
pub fn ortho_defect(a: &Matrix) -> f64 {
    let m = a.nrows();
    op_norm(&(a.transpose() * a - Matrix::identity(m, m)))
}

/// Largest singular value.
pub fn op_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.amax() == 0.0 {
        return 0.0;
    }
    a.singular_values().max()
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &Matrix) -> f64 {
    a.norm()
}

/// `ab − ba`.
pub fn commutator(a: &SkewMap, b: &SkewMap) -> Result<SkewMap> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    Ok(SkewMap::skew_part(&c))
}

/// Matrix exponential of a skew map; the result is orthogonal.
pub fn expm(a: &SkewMap) -> OrthoOp {
    let mat = match a.dim() {
        0 => Matrix::zeros(0, 0),
        1 => Matrix::identity(1, 1),
        2 => expm_planar(a.matrix()),
        3 => expm_rodrigues(a.matrix()),
        _ => expm_pade(a.matrix()),
    };
    OrthoOp::from_trusted(mat)
}

fn expm_planar(a: &Matrix) -> Matrix {
    let theta = 0.5 * (a[(1, 0)] - a[(0, 1)]);
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn expm_rodrigues(a: &Matrix) -> Matrix {
    let w = [
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    ];
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    // sin θ / θ and (1 − cos θ)/θ², Taylor-expanded near 0.
    let (f1, f2) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = SkewMap::from_axial(w).into_matrix();
    let k2 = &k * &k;
    Matrix::identity(3, 3) + k * f1 + k2 * f2
}

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Padé(6,6) with scaling and squaring. Valid for any square matrix.
pub fn expm_pade(a: &Matrix) -> Matrix {
    let m = a.nrows();
    let norm = a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);
    let eye = Matrix::identity(m, m);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let even = &eye * PADE6[0] + &a2 * PADE6[2] + &a4 * PADE6[4] + &a6 * PADE6[6];
    let odd = &scaled * (&eye * PADE6[1] + &a2 * PADE6[3] + &a4 * PADE6[5]);
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled norm <= 0.5");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Orthogonal polar factor of a near-orthogonal matrix.
pub fn polar_retract(a: &Matrix) -> Result<OrthoOp> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let svd = a.clone().svd(true, true);
    for &sigma in svd.singular_values.iter() {
        if !(sigma > 0.5 && sigma < 1.5) {
            return Err(Error::SingularInput { sigma });
        }
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    Ok(OrthoOp::from_trusted(u * v_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax()
    }

    /// Truncated Taylor series, summed to convergence; independent of both expm paths.
    fn expm_taylor(a: &Matrix) -> Matrix {
        let m = a.nrows();
        let mut term = Matrix::identity(m, m);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        for m in 1..5 {
            let e = expm(&SkewMap::zero(m));
            assert_abs_diff_eq!(max_abs_diff(e.matrix(), &Matrix::identity(m, m)), 0.0);
        }
    }

    #[test]
    fn expm_quarter_turn() {
        let e = expm(&SkewMap::planar(PI / 2.0));
        let expected = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(max_abs_diff(e.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn expm_half_turn_about_third_axis() {
        let e = expm(&so3_generator(2).scale(PI));
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -1.0, 1.0]));
        assert!(max_abs_diff(e.matrix(), &expected) < 1e-15);
        let pade = expm_pade(so3_generator(2).scale(PI).matrix());
        assert!(max_abs_diff(&pade, &expected) < 1e-13);
    }

    #[test]
    fn closed_forms_match_taylor() {
        let a2 = SkewMap::planar(1.3);
        assert!(max_abs_diff(expm(&a2).matrix(), &expm_taylor(a2.matrix())) < 1e-14);
        let a3 = SkewMap::from_axial([0.3, -1.1, 0.7]);
        assert!(max_abs_diff(expm(&a3).matrix(), &expm_taylor(a3.matrix())) < 1e-14);
        let a4 = SkewMap::from_upper(4, &[0.2, -0.4, 0.9, 0.1, 0.5, -0.3]).unwrap();
        assert!(max_abs_diff(expm(&a4).matrix(), &expm_taylor(a4.matrix())) < 1e-13);
    }

    #[test]
    fn rodrigues_small_angle_branch() {
        let a = SkewMap::from_axial([1e-6, 2e-6, -3e-6]);
        assert!(max_abs_diff(expm(&a).matrix(), &expm_taylor(a.matrix())) < 1e-16);
    }

    #[test]
    fn polar_retract_identity_and_scaling() {
        let eye = Matrix::identity(3, 3);
        assert!(max_abs_diff(polar_retract(&eye).unwrap().matrix(), &eye) < 1e-15);
        assert!(max_abs_diff(polar_retract(&(&eye * 1.001)).unwrap().matrix(), &eye) < 1e-15);
    }

    #[test]
    fn polar_retract_rejects_collapsed_input() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.4]));
        assert!(matches!(polar_retract(&a), Err(Error::SingularInput { .. })));
    }

    #[test]
    fn polar_retract_perturbation_bound() {
        // SVD oracle: for Q + εE the polar factor moves by at most ~‖εE‖ (σ ≈ 1).
        let q = expm(&SkewMap::from_axial([0.4, 1.2, -0.5]));
        let e = Matrix::from_row_slice(3, 3, &[0.3, -0.8, 0.1, 0.5, 0.2, -0.6, -0.9, 0.4, 0.7]);
        let perturbed = q.matrix() + &e * 1e-6;
        let r = polar_retract(&perturbed).unwrap();
        let dist = op_norm(&(r.matrix() - q.matrix()));
        assert!(dist <= 2e-6, "dist {dist}");
        // Minimizes Frobenius distance: beats the unperturbed Q as a candidate.
        assert!((r.matrix() - &perturbed).norm() <= (q.matrix() - &perturbed).norm() + 1e-15);
    }

    #[test]
    fn commutator_cases() {
        let a = SkewMap::from_axial([0.3, 0.1, -0.2]);
        assert_eq!(commutator(&a, &a).unwrap().matrix().amax(), 0.0);
        let p = commutator(&SkewMap::planar(0.7), &SkewMap::planar(-2.0)).unwrap();
        assert_eq!(p.matrix().amax(), 0.0);
        let c = commutator(&so3_generator(0), &so3_generator(1)).unwrap();
        assert!(max_abs_diff(c.matrix(), so3_generator(2).matrix()) < 1e-15);
        assert!(matches!(
            commutator(&SkewMap::zero(2), &SkewMap::zero(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn norms_of_simple_matrices() {
        let eye = Matrix::identity(2, 2);
        assert_abs_diff_eq!(op_norm(&eye), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hs_norm(&eye), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(op_norm(&Matrix::zeros(2, 2)), 0.0);
        assert_eq!(hs_norm(&Matrix::zeros(2, 2)), 0.0);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 4.0]));
        assert_abs_diff_eq!(op_norm(&d), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hs_norm(&d), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn skew_validation() {
        let bad = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(SkewMap::new(bad), Err(Error::NotSkew { .. })));
        let good = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(SkewMap::new(good).is_ok());
        let near = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1e-3, 0.0]);
        assert!(OrthoOp::new(near).is_err());
    }

    fn skew4() -> impl Strategy<Value = SkewMap> {
        (2usize..=4)
            .prop_flat_map(|m| {
                let k = m * (m - 1) / 2;
                (Just(m), proptest::collection::vec(-1.0f64..1.0, k), 0.0f64..10.0)
            })
            .prop_map(|(m, upper, scale)| {
                let a = SkewMap::from_upper(m, &upper).unwrap();
                let n = hs_norm(a.matrix()).max(1e-12);
                a.scale(scale / n)
            })
    }

    proptest! {
        #[test]
        fn expm_is_orthogonal(a in skew4()) {
            let e = expm(&a);
            prop_assert!(e.ortho_defect() <= 1e-12);
            if a.dim() <= 3 {
                let pade = expm_pade(a.matrix());
                prop_assert!(max_abs_diff(&pade, e.matrix()) <= 1e-11);
            }
        }

        #[test]
        fn polar_retract_idempotent(a in skew4()) {
            let q = expm(&a);
            let r = polar_retract(q.matrix()).unwrap();
            prop_assert!(max_abs_diff(r.matrix(), q.matrix()) <= 1e-13);
            let rr = polar_retract(r.matrix()).unwrap();
            prop_assert!(max_abs_diff(rr.matrix(), r.matrix()) <= 1e-14);
        }

        #[test]
        fn norms_orthogonally_invariant(a in skew4(), b in skew4(), c in skew4(), raw in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let m = a.dim();
            let left = expm(&SkewMap::from_upper(m, &vec![0.3; m * (m - 1) / 2]).unwrap().add(&if b.dim() == m { b.clone() } else { SkewMap::zero(m) }));
            let right = expm(&if c.dim() == m { c.clone() } else { SkewMap::zero(m) });
            let x = Matrix::from_iterator(m, m, raw.into_iter().take(m * m));
            let y = left.matrix() * &x * right.matrix();
            prop_assert!((op_norm(&y) - op_norm(&x)).abs() <= 1e-12 * op_norm(&x).max(1.0));
            prop_assert!((hs_norm(&y) - hs_norm(&x)).abs() <= 1e-12 * hs_norm(&x).max(1.0));
        }
    }
}
