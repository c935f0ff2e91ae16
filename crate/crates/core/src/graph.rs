//! Dense Gaussian weight graph, its unnormalized Laplacian `L = D - W`, and
//! the manifold penalty `f_Uᵗ L f_U / (n+m)²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};

#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
    laplacian: DMatrix<f64>,
    /// Divisor in `exp(-d²/sigma_w)`, when the graph came from [`weight_matrix`].
    sigma_w: Option<f64>,
}

/// `W_ij = exp(-||x_i - x_j||² / sigma_w)`, fully connected, self-weights 1.
pub fn weight_matrix(points: &DMatrix<f64>, sigma_w: f64) -> Result<DMatrix<f64>> {
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma_w must be positive, got {sigma_w}"
        )));
    }
    Ok(gram(&KernelSpec::Gaussian { sigma: sigma_w }, points)?.into_inner())
}

/// `L = D - W` with `D_ii = Σ_j W_ij`. `W` must be symmetric (to 1e-10) and nonnegative.
pub fn laplacian(weights: DMatrix<f64>) -> Result<GraphLaplacian> {
    if !weights.is_square() || weights.nrows() == 0 {
        return Err(Error::invalid(format!(
            "weight matrix must be square and nonempty, got {}x{}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    let asym = (&weights - weights.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::invalid(format!(
            "weight matrix asymmetric by {asym:.3e}"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(
            "weight matrix has negative or non-finite entries",
        ));
    }
    let n = weights.nrows();
    let degrees = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
    let mut lap = -weights.clone();
    for i in 0..n {
        // Setting the diagonal from the off-diagonal sum keeps row sums at zero
        // regardless of W_ii.
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| weights[(i, j)]).sum();
        lap[(i, i)] = off;
    }
    Ok(GraphLaplacian {
        weights,
        degrees,
        laplacian: lap,
        sigma_w: None,
    })
}

impl GraphLaplacian {
    /// Weight matrix plus Laplacian from a point set.
    pub fn build(points: &DMatrix<f64>, sigma_w: f64) -> Result<Self> {
        let mut gl = laplacian(weight_matrix(points, sigma_w)?)?;
        gl.sigma_w = Some(sigma_w);
        Ok(gl)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn sigma_w(&self) -> Option<f64> {
        self.sigma_w
    }

    pub fn size(&self) -> usize {
        self.laplacian.nrows()
    }

    /// `fᵗ L f`.
    pub fn quadratic_form(&self, f: &DVector<f64>) -> Result<f64> {
        if f.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: f.len(),
            });
        }
        Ok(f.dot(&(&self.laplacian * f)))
    }
}

/// `f_Uᵗ L f_U / (n+m)²`, the empirical unsupervised risk of the graph penalty.
pub fn manifold_penalty(gl: &GraphLaplacian, f_u: &DVector<f64>) -> Result<f64> {
    let size = gl.size() as f64;
    Ok(gl.quadratic_form(f_u)? / (size * size))
}
