//! Banded symmetric positive-definite matrices and their Cholesky factors.
//!
//! Every implicit operator in the solver is a five-point stencil that becomes
//! symmetric after multiplying by the cell radius; with the `j * n_r + i`
//! ordering its half bandwidth is `n_r`. Factorizations are computed once per
//! run and reused by every step.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("linear solve did not converge: relative residual {residual:e} exceeds {tolerance:e}")]
    NotConverged { residual: f64, tolerance: f64 },
    #[error("vector length {got} does not match matrix order {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Lower band of a symmetric matrix: row `i` stores columns `i - bw ..= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Entry `(i, j)`, either triangle.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        if a - b > self.bw {
            0.0
        } else {
            self.data[self.slot(a, b)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        assert!(a - b <= self.bw, "entry ({a}, {b}) outside band {}", self.bw);
        let s = self.slot(a, b);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + j0 - i;
            let mut acc = row[self.bw] * x[i];
            for j in j0..i {
                let a = row[off + j - j0];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn cholesky(&self) -> Result<BandedCholesky, LinalgError> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + bw + j - i];
                // rows i and j both store columns k0..j contiguously
                let ri = i * w + bw + k0 - i;
                let rj = j * w + bw + k0 - j;
                for t in 0..(j - k0) {
                    s -= l[ri + t] * l[rj + t];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + bw + j - i] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky {
            n,
            bw,
            l,
            matrix: self.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    matrix: BandedSym,
}

/// Relative residual accepted by [`BandedCholesky::solve_checked`].
pub const RESIDUAL_TOL: f64 = 1e-10;

impl BandedCholesky {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &BandedSym {
        &self.matrix
    }

    /// Overwrite `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            let mut s = b[i];
            for j in j0..i {
                s -= row[bw + j - i] * b[j];
            }
            b[i] = s / row[bw];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * w + bw];
            let bi = b[i];
            let j0 = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            for j in j0..i {
                b[j] -= row[bw + j - i] * bi;
            }
        }
    }

    /// Solve and verify `||A x - b|| <= RESIDUAL_TOL ||b||`.
    pub fn solve_checked(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let mut ax = vec![0.0; self.n];
        self.matrix.matvec(&x, &mut ax);
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = ax.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let rel = if bn > 0.0 { rn / bn } else { rn };
        if !(rel <= RESIDUAL_TOL) {
            return Err(LinalgError::NotConverged {
                residual: rel,
                tolerance: RESIDUAL_TOL,
            });
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn random_spd(n: usize, bw: usize, seed: &[f64]) -> BandedSym {
        let mut a = BandedSym::zeros(n, bw);
        let mut t = 0;
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, seed[t % seed.len()]);
                t += 1;
            }
        }
        // diagonal dominance
        for i in 0..n {
            let s: f64 = (0..n).map(|j| a.get(i, j).abs()).sum();
            a.add(i, i, s + 1.0);
        }
        a
    }

    #[test]
    fn matches_dense_solve() {
        let seed: Vec<f64> = (0..37).map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let (n, bw) = (40, 6);
        let a = random_spd(n, bw, &seed);
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.cholesky().unwrap().solve_checked(&b).unwrap();
        let xd = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = BandedSym::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(LinalgError::NotPositiveDefinite { row: 1, .. })));
    }

    proptest! {
        #[test]
        fn matvec_is_symmetric(vals in proptest::collection::vec(-1.0f64..1.0, 8..64)) {
            let a = random_spd(12, 3, &vals);
            let x: Vec<f64> = (0..12).map(|i| vals[i % vals.len()]).collect();
            let e: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).cos()).collect();
            let (mut ax, mut ae) = (vec![0.0; 12], vec![0.0; 12]);
            a.matvec(&x, &mut ax);
            a.matvec(&e, &mut ae);
            let l: f64 = ax.iter().zip(&e).map(|(p, q)| p * q).sum();
            let r: f64 = ae.iter().zip(&x).map(|(p, q)| p * q).sum();
            prop_assert!((l - r).abs() < 1e-10);
        }
    }
}
