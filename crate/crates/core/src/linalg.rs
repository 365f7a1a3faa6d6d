//! Minimal 2x2 complex matrix support.
//!
//! Everything in this crate lives in a two-dimensional Hilbert space, so a
//! fixed-size matrix type beats pulling in a general linear-algebra stack.

use num_complex::Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[Complex64; 2]; 2],
}

impl Mat2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &Mat2) -> Self {
        let mut out = *self;
        for (r, row) in out.m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e += other.m[r][c];
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat2) -> Self {
        let a = &self.m;
        let b = &other.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// Maximum absolute column sum (induced 1-norm).
    pub fn one_norm(&self) -> f64 {
        let c0 = self.m[0][0].norm() + self.m[1][0].norm();
        let c1 = self.m[0][1].norm() + self.m[1][1].norm();
        c0.max(c1)
    }

    pub fn max_entry_distance(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        d
    }
}

/// Hermitian inner product, antilinear in the first slot.
pub fn inner(a: [Complex64; 2], b: [Complex64; 2]) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn norm2(v: [Complex64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}
