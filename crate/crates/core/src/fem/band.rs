//! Symmetric band storage and a band Cholesky factorization.
//!
//! Row `i` stores columns `i - bw ..= i`; entry `(i, j)` lives at
//! `i * (bw + 1) + (j + bw - i)`. Entries left of column 0 are kept as zeros.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` with `i >= j`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Replaces row and column `d` with the identity row.
    pub fn constrain(&mut self, d: usize) {
        let lo = d.saturating_sub(self.bw);
        for j in lo..d {
            let k = self.idx(d, j);
            self.data[k] = 0.0;
        }
        for i in d + 1..(d + self.bw + 1).min(self.n) {
            let k = self.idx(i, d);
            self.data[k] = 0.0;
        }
        let k = self.idx(d, d);
        self.data[k] = 1.0;
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[self.idx(i, lo)..=self.idx(i, i)];
            let mut acc = 0.0;
            for (off, &a) in row.iter().enumerate() {
                let j = lo + off;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
        y
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Factorizes `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = l[i * w + j + bw - i];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in lo..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if !(s > 1e-14 * scale) {
                        return Err(Error::Singular(format!(
                            "non-positive pivot {s:.3e} at row {i}; the system is insufficiently constrained"
                        )));
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Lower band Cholesky factor; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[ri + k] * y[k];
            }
            y[i] = s / self.l[ri + i];
        }
        for i in (0..n).rev() {
            y[i] /= self.l[i * w + bw];
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            for k in lo..i {
                y[k] -= self.l[ri + k] * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from(a: &SymBand) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(a.dim(), a.dim(), |i, j| a.get(i, j))
    }

    fn spd_band(n: usize, bw: usize) -> SymBand {
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add_lower(i, j, -1.0 / (1.0 + (i - j) as f64 + (i % 3) as f64));
            }
            a.add_lower(i, i, 2.0 * bw as f64 + 1.0);
        }
        a
    }

    #[test]
    fn band_solve_matches_dense() {
        let a = spd_band(40, 5);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = a.cholesky().unwrap().solve(&b);
        let dense = dense_from(&a);
        let xd = dense.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..40 {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
        let ax = a.matvec(&x);
        for i in 0..40 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let a = spd_band(17, 4);
        let x: Vec<f64> = (0..17).map(|i| i as f64 - 3.0).collect();
        let y = a.matvec(&x);
        let yd = dense_from(&a) * nalgebra::DVector::from_vec(x);
        for i in 0..17 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_reported() {
        let a = SymBand::zeros(3, 1);
        assert!(matches!(a.cholesky(), Err(Error::Singular(_))));
    }
}
