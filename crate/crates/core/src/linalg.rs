//! Dense LU with partial pivoting, plus the jitter-and-retry policy shared by
//! the deformed kernel and the learners.
//!
//! nalgebra's own LU does not expose transposed solves, which the 1-norm
//! condition estimator (Hager/Higham) needs, so the factorization lives here.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Factorizations whose reciprocal condition estimate falls below this are retried with jitter.
pub const RCOND_MIN: f64 = 1e-14;

/// Relative jitter added to the diagonal on retry: `JITTER_SCALE * base / n`.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    /// Row-major packed factors: strict lower part is L (unit diagonal), upper part is U.
    lu: Vec<f64>,
    /// Row `i` of the factored matrix is row `perm[i]` of the input.
    perm: Vec<usize>,
    norm1: f64,
}

impl Lu {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::invalid(format!(
                "LU of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("LU of empty matrix"));
        }
        let mut lu = vec![0.0; n * n];
        let mut norm1 = 0.0f64;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                let v = a[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Numerical {
                        msg: "non-finite matrix entry".into(),
                        rcond: 0.0,
                    });
                }
                lu[i * n + j] = v;
                col += v.abs();
            }
            norm1 = norm1.max(col);
        }
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 {
                return Err(Error::Numerical {
                    msg: format!("zero pivot in column {k}"),
                    rcond: 0.0,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            let (head, tail) = lu.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..(k + 1) * n];
            for row in tail.chunks_mut(n) {
                let l = row[k] / pivot;
                row[k] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        row[j] -= l * row_k[j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn solve_in_place(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, xj)| l * xj).sum();
            x[i] = b[self.perm[i]] - s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, xj)| u * xj)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
    }

    fn solve_transpose_in_place(&self, b: &[f64], out: &mut [f64]) {
        let n = self.n;
        // U^T w = b
        let mut w = b.to_vec();
        for i in 0..n {
            w[i] /= self.lu[i * n + i];
            let wi = w[i];
            let row = &self.lu[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                w[j] -= row[j] * wi;
            }
        }
        // L^T v = w, unit diagonal
        for i in (0..n).rev() {
            let vi = w[i];
            let row = &self.lu[i * n..i * n + i];
            for (j, l) in row.iter().enumerate() {
                w[j] -= l * vi;
            }
        }
        for i in 0..n {
            out[self.perm[i]] = w[i];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rhs(b.len())?;
        let mut x = DVector::zeros(self.n);
        self.solve_in_place(b.as_slice(), x.as_mut_slice());
        Ok(x)
    }

    pub fn solve_transpose_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rhs(b.len())?;
        let mut x = DVector::zeros(self.n);
        self.solve_transpose_in_place(b.as_slice(), x.as_mut_slice());
        Ok(x)
    }

    /// Solves `A X = B` column by column; columns are processed in parallel.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rhs(b.nrows())?;
        let n = self.n;
        let mut out = DMatrix::zeros(n, b.ncols());
        // DMatrix is column-major, so each output column is a contiguous chunk.
        out.as_mut_slice()
            .par_chunks_mut(n)
            .zip(b.as_slice().par_chunks(n))
            .for_each(|(x, col)| self.solve_in_place(col, x));
        Ok(out)
    }

    fn check_rhs(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }

    /// Reciprocal 1-norm condition estimate, `1 / (||A||_1 * est(||A^-1||_1))`.
    pub fn rcond(&self) -> f64 {
        let inv_norm = self.inverse_norm1_estimate();
        if !inv_norm.is_finite() || self.norm1 == 0.0 {
            return 0.0;
        }
        1.0 / (self.norm1 * inv_norm)
    }

    // Hager's estimator with Higham's alternating-sign safeguard.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            return 1.0 / self.lu[0].abs();
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            self.solve_in_place(&x, &mut y);
            est = y.iter().map(|v| v.abs()).sum();
            let xi: Vec<f64> = y
                .iter()
                .map(|v| if *v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            self.solve_transpose_in_place(&xi, &mut z);
            let (j, zmax) = z.iter().enumerate().fold((0, -1.0), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n - 1) as f64)
            })
            .collect();
        self.solve_in_place(&alt, &mut y);
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// A factorization together with how it was obtained.
#[derive(Debug, Clone)]
pub struct Factored {
    pub lu: Lu,
    pub rcond: f64,
    /// Diagonal shift added on retry, if the first attempt was near-singular.
    pub jitter: Option<f64>,
}

/// Factor `a`; if it is singular or `rcond < RCOND_MIN`, add
/// `JITTER_SCALE * jitter_base / n` to the diagonal and retry once.
pub fn factor_with_jitter(a: &DMatrix<f64>, jitter_base: f64, what: &str) -> Result<Factored> {
    let first = Lu::factor(a).map(|lu| {
        let rcond = lu.rcond();
        (lu, rcond)
    });
    let first_rcond = match first {
        Ok((lu, rcond)) if rcond >= RCOND_MIN => {
            return Ok(Factored {
                lu,
                rcond,
                jitter: None,
            })
        }
        Ok((_, rcond)) => rcond,
        Err(_) => 0.0,
    };

    let n = a.nrows();
    let base = if jitter_base.is_finite() && jitter_base > 0.0 {
        jitter_base
    } else {
        n as f64
    };
    let jitter = JITTER_SCALE * base / n as f64;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    match Lu::factor(&shifted) {
        Ok(lu) => {
            let rcond = lu.rcond();
            if rcond < RCOND_MIN {
                return Err(Error::Numerical {
                    msg: format!("{what}: near-singular even after diagonal jitter {jitter:.3e}"),
                    rcond,
                });
            }
            log::warn!(
                "{what}: rcond {first_rcond:.3e} below {RCOND_MIN:.0e}; retried with diagonal jitter {jitter:.3e} (rcond now {rcond:.3e})"
            );
            Ok(Factored {
                lu,
                rcond,
                jitter: Some(jitter),
            })
        }
        Err(_) => Err(Error::Numerical {
            msg: format!("{what}: singular even after diagonal jitter {jitter:.3e}"),
            rcond: first_rcond,
        }),
    }
}
