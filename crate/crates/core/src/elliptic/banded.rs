//! Banded LU factorization without pivoting.
//!
//! Interior nodes are numbered row-major, so every operator assembled on the
//! grid (Laplacian, Newton Jacobians) has half-bandwidth about one grid row.
//! The matrices are diagonally dominant M-matrices or small perturbations of
//! one, so pivoting is not needed.

use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar types the factorization can be carried out in.
pub trait BandScalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn zero() -> Self;
    fn abs(self) -> f64;
    fn mul_c(self, x: Complex64) -> Complex64;
    fn div_c(x: Complex64, d: Self) -> Complex64;
}

impl BandScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn mul_c(self, x: Complex64) -> Complex64 {
        x * self
    }
    fn div_c(x: Complex64, d: Self) -> Complex64 {
        x / d
    }
}

impl BandScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn mul_c(self, x: Complex64) -> Complex64 {
        self * x
    }
    fn div_c(x: Complex64, d: Self) -> Complex64 {
        x / d
    }
}

/// Square band matrix stored row by row, `2·bw + 1` entries per row.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: BandScalar> BandMatrix<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![T::zero(); n * (2 * bw + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.data[k] = self.data[k] + v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i.abs_diff(j) > self.bw {
            return T::zero();
        }
        self.data[self.idx(i, j)]
    }

    /// In-place Doolittle factorization.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        let scale = (0..n).map(|i| self.data[i * w + bw].abs()).fold(0.0, f64::max);
        for k in 0..n {
            let pivot = self.data[k * w + bw];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::SingularSystem(k));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = i * w + (k + bw - i);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l.abs() == 0.0 {
                    continue;
                }
                // row k occupies columns k..=last in the upper part
                let krow = k * w + bw;
                let irow = i * w + (k + bw - i);
                for off in 1..=(last - k) {
                    let kj = self.data[krow + off];
                    self.data[irow + off] = self.data[irow + off] - l * kj;
                }
            }
        }
        Ok(BandedLu { n, bw, data: self.data })
    }
}

/// Factors `L U` packed in band storage.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: BandScalar> BandedLu<T> {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut s = b[i];
            for j in first..i {
                s -= self.data[i * w + (j + bw - i)].mul_c(b[j]);
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + bw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=last {
                s -= self.data[i * w + (j + bw - i)].mul_c(b[j]);
            }
            b[i] = T::div_c(s, self.data[i * w + bw]);
        }
    }
}
