//! Base kernels, Gram matrices, and kernel vectors.
//!
//! The Gaussian kernel is `exp(-||x - y||² / sigma)`: `sigma` divides the
//! squared distance directly. The more common "bandwidth" `h` of
//! `exp(-||x - y||² / (2h²))` maps to `sigma = 2h²`; see
//! [`KernelSpec::gaussian_bandwidth`].

use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { sigma: f64 },
    Linear,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(KernelSpec::Gaussian { sigma })
    }

    /// Gaussian with bandwidth `h`, i.e. `exp(-d² / (2h²))`.
    pub fn gaussian_bandwidth(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        Self::gaussian(bandwidth_to_sigma(h))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } => Self::gaussian(sigma).map(|_| ()),
            KernelSpec::Linear => Ok(()),
        }
    }

    #[inline]
    fn eval_slices(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / sigma).exp()
            }
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval_slices(x, y))
    }
}

/// `2h²`, the divisor of the squared distance for bandwidth `h`.
pub fn bandwidth_to_sigma(h: f64) -> f64 {
    2.0 * h * h
}

/// A symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps a square matrix; asymmetry beyond `1e-12` relative to its largest entry is rejected.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::invalid(format!(
                "gram must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::invalid(format!("gram asymmetric by {asym:.3e}")));
        }
        Ok(GramMatrix { entries })
    }

    pub(crate) fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Self {
        GramMatrix { entries }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.entries.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

fn row_vec(points: &DMatrix<f64>, i: usize) -> Vec<f64> {
    points.row(i).iter().copied().collect()
}

fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows()).map(|i| row_vec(points, i)).collect()
}

pub fn kernel_eval(spec: &KernelSpec, x: &RowDVector<f64>, y: &RowDVector<f64>) -> Result<f64> {
    spec.eval(x.as_slice(), y.as_slice())
}

/// `K_ij = k(x_i, x_j)` over the rows of `points`. Only the upper triangle is
/// evaluated and mirrored, so the result is exactly symmetric.
pub fn gram(spec: &KernelSpec, points: &DMatrix<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::invalid("gram of an empty point set"));
    }
    let rows = rows_of(points);
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| spec.eval_slices(&rows[i], &rows[j]))
                .collect()
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            k[(i, i + off)] = *v;
            k[(i + off, i)] = *v;
        }
    }
    Ok(GramMatrix::from_symmetric_unchecked(k))
}

/// `C_ij = k(a_i, b_j)` for row sets `a` and `b`.
pub fn cross_gram(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    let ra = rows_of(a);
    let rb = rows_of(b);
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    out.as_mut_slice()
        .par_chunks_mut(a.nrows().max(1))
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v = spec.eval_slices(&ra[i], &rb[j]);
            }
        });
    Ok(out)
}

/// `(k(u_1, x), ..., k(u_N, x))` for anchors `u` (rows of `anchors`).
pub fn kernel_vector(spec: &KernelSpec, anchors: &DMatrix<f64>, x: &[f64]) -> Result<DVector<f64>> {
    spec.validate()?;
    if anchors.nrows() == 0 {
        return Err(Error::invalid("kernel_vector needs at least one anchor"));
    }
    if anchors.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.ncols(),
            found: x.len(),
        });
    }
    Ok(DVector::from_iterator(
        anchors.nrows(),
        (0..anchors.nrows()).map(|i| spec.eval_slices(&row_vec(anchors, i), x)),
    ))
}
