//! Direct solvers for banded sparse matrices.
//!
//! Row-major vertex numbering on the structured grid gives the P1 matrices a
//! bandwidth of `nx + 2`, so a band factorization is a complete direct
//! solver for the problem sizes handled here.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::DenseLu;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Anything that solves `A x = b` for a fixed, already factored `A`.
pub trait LinearSolver {
    fn dim(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Vec<f64>;

    /// Solves for several right-hand sides.
    fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }
}

const PIVOT_RTOL: f64 = 1e-13;

/// `A = L Lᵀ` for a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw..=i] at offsets 0..=bw
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the lower triangle of `a`; the upper triangle is ignored.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("Cholesky of a non-square matrix"));
        }
        let n = a.nrows();
        let bw = a.bandwidths().0;
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, j, v) in a.iter() {
            if j <= i {
                band[i * w + (j + bw - i)] = v;
            }
        }
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let j0 = j.saturating_sub(bw).max(i0);
                let mut s = band[i * w + (j + bw - i)];
                for k in j0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    // pivots at rounding level of the diagonal mean a numerically singular matrix
                    let d = band[i * w + bw].abs();
                    if !(s > PIVOT_RTOL * d) || !s.is_finite() {
                        return Err(Error::SolverFailure(format!(
                            "non-positive pivot {s:e} at row {i}; matrix is not positive definite"
                        )));
                    }
                    band[i * w + bw] = libm::sqrt(s);
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }
}

impl LinearSolver for BandedCholesky {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let (bw, w) = (self.bw, self.bw + 1);
        let mut x = rhs.to_vec();
        for i in 0..self.n {
            let i0 = i.saturating_sub(bw);
            let row = &self.band[i * w..(i + 1) * w];
            let s: f64 = (i0..i).map(|k| row[k + bw - i] * x[k]).sum();
            x[i] = (x[i] - s) / row[bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.band[i * w + bw];
            let xi = x[i];
            let i0 = i.saturating_sub(bw);
            for k in i0..i {
                x[k] -= self.band[i * w + (k + bw - i)] * xi;
            }
        }
        x
    }
}

/// Band LU with partial pivoting, for general (e.g. saddle-point) band matrices.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl .. i-kl+width
    width: usize,
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("LU of a non-square matrix"));
        }
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut f = Self {
            n,
            kl,
            ku,
            width,
            rows: vec![0.0; n * width],
            mult: vec![0.0; n * kl.max(1)],
            piv: (0..n).collect(),
        };
        for (i, j, v) in a.iter() {
            *f.at_mut(i, j) = v;
        }
        let reach = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = f.at(k, k).abs();
            for i in k + 1..=last {
                let v = f.at(i, k).abs();
                if v > pmax {
                    p = i;
                    pmax = v;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::SolverFailure(format!("singular band matrix at column {k}")));
            }
            f.piv[k] = p;
            let cend = (k + reach).min(n - 1);
            if p != k {
                for c in k..=cend {
                    let a = f.at(k, c);
                    *f.at_mut(k, c) = f.at(p, c);
                    *f.at_mut(p, c) = a;
                }
            }
            let pivot = f.at(k, k);
            for i in k + 1..=last {
                let m = f.at(i, k) / pivot;
                f.mult[k * kl.max(1) + (i - k - 1)] = m;
                *f.at_mut(i, k) = 0.0;
                if m == 0.0 {
                    continue;
                }
                for c in k + 1..=cend {
                    let u = f.at(k, c);
                    *f.at_mut(i, c) -= m * u;
                }
            }
        }
        Ok(f)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j + self.kl - i < self.width);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[self.offset(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let o = self.offset(i, j);
        &mut self.rows[o]
    }
}

impl LinearSolver for BandedLu {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            let last = (k + self.kl).min(n - 1);
            for i in k + 1..=last {
                x[i] -= self.mult[k * self.kl.max(1) + (i - k - 1)] * xk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let cend = (k + reach).min(n - 1);
            let s: f64 = (k + 1..=cend).map(|c| self.at(k, c) * x[c]).sum();
            x[k] = (x[k] - s) / self.at(k, k);
        }
        x
    }
}

impl LinearSolver for DenseLu {
    fn dim(&self) -> usize {
        self.order()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        DenseLu::solve(self, rhs)
    }
}

/// Relative residual `‖A x - b‖∞ / (1 + ‖b‖∞)`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
    r / (1.0 + crate::norm_inf(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0 + shift);
            if i > 0 {
                b.push(i, i - 1, -1.0);
                b.push(i - 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = laplace_1d(20, 0.1);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let chol = BandedCholesky::factor(&a).unwrap();
        assert_eq!(chol.bandwidth(), 1);
        let sol = chol.solve(&b);
        assert!(relative_residual(&a, &sol, &b) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = laplace_1d(5, -3.0);
        assert!(matches!(BandedCholesky::factor(&a), Err(Error::SolverFailure(_))));
    }

    #[test]
    fn band_lu_handles_zero_diagonal_saddle() {
        // [[I, B], [Bᵀ, 0]] interleaved so pivoting is required
        let n = 6;
        let mut t = TripletBuilder::new(2 * n, 2 * n);
        for i in 0..n {
            t.push(2 * i, 2 * i, 1.0 + i as f64 * 0.1);
            t.push(2 * i, 2 * i + 1, 2.0);
            t.push(2 * i + 1, 2 * i, 2.0);
            if i + 1 < n {
                t.push(2 * i + 1, 2 * i + 2, -1.0);
                t.push(2 * i + 2, 2 * i + 1, -1.0);
            }
        }
        let a = t.build();
        let x: Vec<f64> = (0..2 * n).map(|i| 1.0 + (i as f64).cos()).collect();
        let b = a.mul_vec(&x);
        let lu = BandedLu::factor(&a).unwrap();
        let sol = lu.solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-12, "{s} vs {e}");
        }
    }
}
