//! Small fixed-size complex linear algebra shared by the whole crate.
//!
//! Density matrices are 2x2, superoperators act on row-major vectorized
//! states, i.e. `vec(rho) = (rho_ee, rho_eg, rho_ge, rho_gg)` with `e` the
//! upper level. A map `rho -> A rho B` vectorizes to the Kronecker product
//! `A (x) B^T`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn sigma_plus() -> Mat2 {
    Mat2::new(ZERO, ONE, ZERO, ZERO)
}

pub fn sigma_minus() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

/// Row-major vectorization `(rho_ee, rho_eg, rho_ge, rho_gg)`.
pub fn vectorize(rho: &Mat2) -> Vec4 {
    Vec4::new(rho[(0, 0)], rho[(0, 1)], rho[(1, 0)], rho[(1, 1)])
}

pub fn unvectorize(v: &Vec4) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

/// Superoperator of `rho -> A rho B` in the row-major convention.
pub fn sandwich_super(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + j, 2 * k + l)] = a[(i, k)] * b[(l, j)];
                }
            }
        }
    }
    m
}

/// Superoperator of left multiplication `rho -> A rho`.
pub fn left_super(a: &Mat2) -> Mat4 {
    sandwich_super(a, &identity2())
}

/// Superoperator of right multiplication `rho -> rho B`.
pub fn right_super(b: &Mat2) -> Mat4 {
    sandwich_super(&identity2(), b)
}

/// Superoperator of the commutator map `rho -> [H, rho]`.
pub fn commutator_super(h: &Mat2) -> Mat4 {
    left_super(h) - right_super(h)
}

/// The trace functional as a row vector: `tr(rho) = row . vec(rho)`.
pub fn trace_row() -> nalgebra::RowVector4<C64> {
    nalgebra::RowVector4::new(ONE, ZERO, ZERO, ONE)
}

/// Largest entry magnitude of a superoperator.
pub fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest magnitude of `tr . M` over columns; zero when the map is
/// trace-preserving as a generator.
pub fn trace_defect(m: &Mat4) -> f64 {
    let row = trace_row() * m;
    row.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Checks Hermiticity covariance: `M(rho^dag)^dag == M(rho)` on a basis.
/// Returns the largest deviation found.
pub fn hermiticity_defect(m: &Mat4) -> f64 {
    let mut worst = 0.0_f64;
    // Basis of Hermitian matrices spanning all inputs.
    let basis = [
        Mat2::new(ONE, ZERO, ZERO, ZERO),
        Mat2::new(ZERO, ZERO, ZERO, ONE),
        Mat2::new(ZERO, ONE, ONE, ZERO),
        Mat2::new(ZERO, I, -I, ZERO),
    ];
    for b in basis {
        let out = unvectorize(&(m * vectorize(&b)));
        let defect = (out - out.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(defect);
    }
    worst
}

/// Solves `M x = rhs` for a 4x4 complex system by LU with partial pivoting.
pub fn solve4(m: &Mat4, rhs: &Vec4) -> Option<Vec4> {
    let lu = nalgebra::LU::new(*m);
    lu.solve(rhs)
}

/// Eigenvalues of a 2x2 Hermitian matrix (closed form).
pub fn hermitian_eigenvalues2(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let tr = a + d;
    let disc = ((a - d) * 0.5).powi(2) + b.norm_sqr();
    let s = disc.max(0.0).sqrt();
    (tr * 0.5 + s, tr * 0.5 - s)
}
