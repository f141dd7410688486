//! Small dense complex matrices (N <= 3) stored inline.
//!
//! Group and algebra elements are both represented by [`Mat`]; the hot loops
//! (transport, stencils, averaging) never allocate.

use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64 as C64;

pub const MAX_N: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    a: [C64; MAX_N * MAX_N],
}

const Z: C64 = C64 { re: 0.0, im: 0.0 };

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_N).contains(&n), "matrix size {n} unsupported");
        Mat { n, a: [Z; MAX_N * MAX_N] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * MAX_N + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * MAX_N + i] = c;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i * MAX_N + j] = f(i, j);
            }
        }
        m
    }

    /// Build from row-major entries.
    pub fn from_rows(n: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), n * n);
        Self::from_fn(n, |i, j| entries[i * n + j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.a[i * MAX_N + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.a[i * MAX_N + j] = v;
    }

    pub fn entries(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i * MAX_N + j] = self.a[j * MAX_N + i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i * MAX_N + i]).sum()
    }

    pub fn det(&self) -> C64 {
        let g = |i, j| self.get(i, j);
        match self.n {
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0),
            _ => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                    - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
        }
    }

    /// Inverse by cofactors; `None` when numerically singular.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() < 1e-300 {
            return None;
        }
        let g = |i, j| self.get(i, j);
        let inv = match self.n {
            1 => Self::scalar(1, C64::new(1.0, 0.0) / d),
            2 => {
                Self::from_rows(2, &[g(1, 1) / d, -g(0, 1) / d, -g(1, 0) / d, g(0, 0) / d])
            }
            _ => Self::from_fn(3, |i, j| {
                // cofactor of (j, i)
                let r: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                let c: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                let minor = g(r[0], c[0]) * g(r[1], c[1]) - g(r[0], c[1]) * g(r[1], c[0]);
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                minor * sign / d
            }),
        };
        Some(inv)
    }

    pub fn fro_norm_sqr(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        match self.n {
            1 => vec![self.a[0].norm()],
            2 => {
                let s1 = self.op_norm();
                // s1 * s2 = |det| is better conditioned than the difference formula
                let s2 = if s1 > 0.0 { self.det().norm() / s1 } else { 0.0 };
                vec![s1, s2]
            }
            _ => {
                let mut s: Vec<f64> =
                    self.to_na3().svd(false, false).singular_values.iter().copied().collect();
                s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                s
            }
        }
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        match self.n {
            1 => self.a[0].norm(),
            2 => {
                // largest eigenvalue of M*M written without cancellation
                let (a, b, c, d) = (self.a[0], self.a[1], self.a[MAX_N], self.a[MAX_N + 1]);
                let p = a.norm_sqr() + c.norm_sqr();
                let r = b.norm_sqr() + d.norm_sqr();
                let q = a.conj() * b + c.conj() * d;
                let half = 0.5 * (p - r);
                (0.5 * (p + r) + (half * half + q.norm_sqr()).sqrt()).sqrt()
            }
            _ => self.singular_values()[0],
        }
    }

    pub fn commutator(&self, other: &Mat) -> Mat {
        *self * *other - *other * *self
    }

    /// (X - X*)/2, made traceless when `traceless`.
    pub fn anti_hermitian_part(&self, traceless: bool) -> Mat {
        let mut m = (*self - self.adjoint()) * 0.5;
        if traceless {
            let t = m.trace() / self.n as f64;
            for i in 0..self.n {
                m.a[i * MAX_N + i] -= t;
            }
        }
        m
    }

    pub(crate) fn to_na2(self) -> Matrix2<C64> {
        Matrix2::new(self.get(0, 0), self.get(0, 1), self.get(1, 0), self.get(1, 1))
    }

    pub(crate) fn to_na3(self) -> Matrix3<C64> {
        Matrix3::from_fn(|i, j| self.get(i, j))
    }

    pub(crate) fn from_na2(m: &Matrix2<C64>) -> Self {
        Self::from_fn(2, |i, j| m[(i, j)])
    }

    pub(crate) fn from_na3(m: &Matrix3<C64>) -> Self {
        Self::from_fn(3, |i, j| m[(i, j)])
    }
}

impl Add for Mat {
    type Output = Mat;
    #[inline]
    fn add(mut self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        for k in 0..MAX_N * MAX_N {
            self.a[k] += rhs.a[k];
        }
        self
    }
}

impl Sub for Mat {
    type Output = Mat;
    #[inline]
    fn sub(mut self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        for k in 0..MAX_N * MAX_N {
            self.a[k] -= rhs.a[k];
        }
        self
    }
}

impl AddAssign for Mat {
    #[inline]
    fn add_assign(&mut self, rhs: Mat) {
        for k in 0..MAX_N * MAX_N {
            self.a[k] += rhs.a[k];
        }
    }
}

impl SubAssign for Mat {
    #[inline]
    fn sub_assign(&mut self, rhs: Mat) {
        for k in 0..MAX_N * MAX_N {
            self.a[k] -= rhs.a[k];
        }
    }
}

impl Neg for Mat {
    type Output = Mat;
    #[inline]
    fn neg(mut self) -> Mat {
        for k in 0..MAX_N * MAX_N {
            self.a[k] = -self.a[k];
        }
        self
    }
}

impl Mul for Mat {
    type Output = Mat;
    #[inline]
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let s = self.a[i * MAX_N + k];
                for j in 0..n {
                    out.a[i * MAX_N + j] += s * rhs.a[k * MAX_N + j];
                }
            }
        }
        out
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    #[inline]
    fn mul(mut self, s: f64) -> Mat {
        for k in 0..MAX_N * MAX_N {
            self.a[k] *= s;
        }
        self
    }
}

impl Mul<C64> for Mat {
    type Output = Mat;
    #[inline]
    fn mul(mut self, s: C64) -> Mat {
        for k in 0..MAX_N * MAX_N {
            self.a[k] *= s;
        }
        self
    }
}

impl MulAssign<f64> for Mat {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        for k in 0..MAX_N * MAX_N {
            self.a[k] *= s;
        }
    }
}
