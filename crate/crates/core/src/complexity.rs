//! Empirical Rademacher complexity of kernel balls: the trace sandwich for a
//! base kernel, its manifold-regularized refinement, Monte-Carlo reference
//! estimates, μ sweeps, and elbow selection.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deform::{DeformOperators, DeformedKernel};
use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelSpec};

/// Negative diagonal entries down to this are treated as round-off.
const DIAG_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadBound {
    pub lower: f64,
    pub upper: f64,
    pub r: f64,
    pub n: usize,
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!(
            "radius r must be positive, got {r}"
        )));
    }
    Ok(())
}

/// `(r/n)·√Σ k(x_i, x_i)` and that value over `√2`.
pub fn rad_bounds_base(r: f64, diag: &DVector<f64>) -> Result<RadBound> {
    check_radius(r)?;
    let n = diag.len();
    if n == 0 {
        return Err(Error::invalid("rademacher bound needs at least one point"));
    }
    let mut sum = 0.0;
    for (i, &d) in diag.iter().enumerate() {
        if !d.is_finite() || d < -DIAG_SLACK {
            return Err(Error::invalid(format!("kernel diagonal entry {i} is {d}")));
        }
        sum += d.max(0.0);
    }
    let upper = r / n as f64 * sum.sqrt();
    Ok(RadBound {
        lower: upper / std::f64::consts::SQRT_2,
        upper,
        r,
        n,
    })
}

/// `(r/n)·√Σ max(0, k(x_i,x_i) - k_{x_i}ᵗ(I/μ + LK)⁻¹L k_{x_i})`.
pub fn rad_upper_mr(
    r: f64,
    base_diag: &DVector<f64>,
    deformation_diag: &DVector<f64>,
) -> Result<f64> {
    check_radius(r)?;
    if base_diag.len() != deformation_diag.len() {
        return Err(Error::DimensionMismatch {
            expected: base_diag.len(),
            found: deformation_diag.len(),
        });
    }
    let n = base_diag.len();
    if n == 0 {
        return Err(Error::invalid("rademacher bound needs at least one point"));
    }
    let mut sum = 0.0;
    for i in 0..n {
        let d = base_diag[i] - deformation_diag[i];
        if !d.is_finite() || d < -DIAG_SLACK {
            return Err(Error::invalid(format!(
                "deformed diagonal entry {i} is {d}"
            )));
        }
        sum += d.max(0.0);
    }
    Ok(r / n as f64 * sum.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Monte-Carlo estimate `(r/n)·E_σ √(σᵗKσ)` over uniform sign vectors.
pub fn rad_empirical_mc(
    r: f64,
    gram: &GramMatrix,
    num_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_radius(r)?;
    if num_draws == 0 {
        return Err(Error::invalid("num_draws must be at least 1"));
    }
    let k = gram.entries();
    let n = k.nrows();
    if n == 0 {
        return Err(Error::invalid("empty gram matrix"));
    }
    let min_eig = SymmetricEigen::new(k.clone()).eigenvalues.min();
    if min_eig < -1e-8 * gram.trace().abs().max(1.0) {
        return Err(Error::invalid(format!(
            "gram matrix is not PSD (min eigenvalue {min_eig:.3e})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma = DVector::zeros(n);
    // Welford updates: identical draws leave the mean exact.
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 1..=num_draws {
        for s in sigma.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let v = sigma.dot(&(k * &sigma)).max(0.0).sqrt();
        let delta = v - mean;
        mean += delta / t as f64;
        m2 += delta * (v - mean);
    }
    let d = num_draws as f64;
    let var = if num_draws > 1 { m2 / (d - 1.0) } else { 0.0 };
    let scale = r / n as f64;
    Ok(McEstimate {
        estimate: scale * mean,
        std_error: scale * (var / d).sqrt(),
        draws: num_draws,
    })
}

/// `count` log-spaced values from `lo` to `hi`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::invalid(format!(
            "bad log grid [{lo}, {hi}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    let mut g: Vec<f64> = (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect();
    g[0] = lo;
    g[count - 1] = hi;
    Ok(g)
}

/// Checks that a μ grid is nonempty, positive, finite, and strictly increasing.
pub fn validate_mu_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("mu grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::invalid(format!(
            "mu grid values must be positive and finite, got {bad}"
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "mu grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCurve {
    pub mu_grid: Vec<f64>,
    pub upper_values: Vec<f64>,
    pub lower_values: Vec<f64>,
    /// Per grid point: `None` if evaluated, else the failure message.
    pub failures: Vec<Option<String>>,
    pub elbow_index: Option<usize>,
}

impl ComplexityCurve {
    /// Builds a curve from already computed upper values; lower = upper/√2.
    pub fn from_values(mu_grid: Vec<f64>, upper_values: Vec<f64>) -> Result<Self> {
        validate_mu_grid(&mu_grid)?;
        if upper_values.len() != mu_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: mu_grid.len(),
                found: upper_values.len(),
            });
        }
        let failures = upper_values
            .iter()
            .map(|v| (!v.is_finite()).then(|| "non-finite value".to_string()))
            .collect();
        let lower_values = upper_values
            .iter()
            .map(|v| v / std::f64::consts::SQRT_2)
            .collect();
        Ok(ComplexityCurve {
            mu_grid,
            upper_values,
            lower_values,
            failures,
            elbow_index: None,
        })
    }

    pub fn len(&self) -> usize {
        self.mu_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_grid.is_empty()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.failures[i].is_none())
            .collect()
    }

    pub fn elbow_mu(&self) -> Option<f64> {
        self.elbow_index.map(|i| self.mu_grid[i])
    }

    /// Largest increase between consecutive valid points (0 for a monotone curve).
    pub fn max_monotonicity_violation(&self) -> f64 {
        let v = self.valid_indices();
        v.windows(2)
            .map(|w| self.upper_values[w[1]] - self.upper_values[w[0]])
            .fold(0.0, f64::max)
    }

    /// Writes `mu,upper,lower,selected`; failed points carry `NaN` values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mu", "upper", "lower", "selected"])
            .map_err(csv_err)?;
        for i in 0..self.len() {
            let sel = if self.elbow_index == Some(i) {
                "1"
            } else {
                "0"
            };
            out.write_record([
                self.mu_grid[i].to_string(),
                self.upper_values[i].to_string(),
                self.lower_values[i].to_string(),
                sel.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rd.headers().map_err(csv_err)?.clone();
        let want = ["mu", "upper", "lower", "selected"];
        if headers.len() < 2 || headers.iter().zip(want).any(|(h, w)| h.trim() != w) {
            return Err(Error::Parse {
                row: 1,
                msg: format!("expected header mu,upper[,lower,selected], got {headers:?}"),
            });
        }
        let (mut mu, mut upper, mut selected) = (Vec::new(), Vec::new(), None);
        for (i, rec) in rd.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            let field = |j: usize| -> Result<f64> {
                rec.get(j)
                    .ok_or_else(|| Error::Parse {
                        row,
                        msg: format!("missing column {j}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        row,
                        msg: e.to_string(),
                    })
            };
            mu.push(field(0)?);
            upper.push(field(1)?);
            if rec.len() >= 4 && field(3)? == 1.0 {
                if selected.is_some() {
                    return Err(Error::Parse {
                        row,
                        msg: "more than one selected row".into(),
                    });
                }
                selected = Some(i);
            }
        }
        let mut curve = ComplexityCurve::from_values(mu, upper)?;
        curve.elbow_index = selected;
        Ok(curve)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        row: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    }
}

/// Horizontal coordinate used by the elbow chord rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElbowAxis {
    /// μ rescaled to [0, 1] over the grid.
    #[default]
    Linear,
    /// log₁₀ μ.
    Log10,
}

impl std::str::FromStr for ElbowAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ElbowAxis::Linear),
            "log10" | "log" => Ok(ElbowAxis::Log10),
            other => Err(Error::invalid(format!(
                "unknown elbow axis '{other}' (linear|log10)"
            ))),
        }
    }
}

/// Elbow with the default axis.
pub fn elbow_select(curve: &ComplexityCurve) -> Result<usize> {
    elbow_select_with(curve, ElbowAxis::default())
}

/// Index of the valid interior point farthest from the chord joining the first
/// and last valid points, with values normalized by the first value. Ties go
/// to the smaller μ.
pub fn elbow_select_with(curve: &ComplexityCurve, axis: ElbowAxis) -> Result<usize> {
    let idx = curve.valid_indices();
    if idx.len() < 3 {
        return Err(Error::invalid(format!(
            "elbow selection needs at least 3 valid points, got {}",
            idx.len()
        )));
    }
    let x_raw: Vec<f64> = idx
        .iter()
        .map(|&i| match axis {
            ElbowAxis::Linear => curve.mu_grid[i],
            ElbowAxis::Log10 => curve.mu_grid[i].log10(),
        })
        .collect();
    let xs: Vec<f64> = match axis {
        ElbowAxis::Linear => {
            let (lo, hi) = (x_raw[0], x_raw[x_raw.len() - 1]);
            x_raw.iter().map(|x| (x - lo) / (hi - lo)).collect()
        }
        ElbowAxis::Log10 => x_raw,
    };
    let v0 = curve.upper_values[idx[0]];
    let norm = if v0.abs() > 0.0 { v0 } else { 1.0 };
    let ys: Vec<f64> = idx.iter().map(|&i| curve.upper_values[i] / norm).collect();

    let last = idx.len() - 1;
    let (dx, dy) = (xs[last] - xs[0], ys[last] - ys[0]);
    let len = dx.hypot(dy);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..last {
        let d = (dy * (xs[k] - xs[0]) - dx * (ys[k] - ys[0])).abs() / len;
        if d > best.1 + 1e-12 {
            best = (k, d);
        }
    }
    Ok(idx[best.0])
}

/// Sweeps μ over `mu_grid`, bounding the labeled points' complexity under the
/// deformed kernel built on all `anchors`. The base Gram is computed once and
/// grid points are evaluated in parallel; a grid point whose factorization
/// fails is recorded in `failures` and skipped by elbow selection.
pub fn complexity_curve(
    r: f64,
    base: KernelSpec,
    anchors: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    labeled_indices: &[usize],
    mu_grid: &[f64],
) -> Result<ComplexityCurve> {
    check_radius(r)?;
    validate_mu_grid(mu_grid)?;
    if labeled_indices.is_empty() {
        return Err(Error::invalid(
            "complexity curve needs at least one labeled point",
        ));
    }
    let ops = Arc::new(DeformOperators::new(
        base,
        anchors.clone(),
        laplacian.clone(),
    )?);
    complexity_curve_with(r, &ops, labeled_indices, mu_grid)
}

/// As [`complexity_curve`] with precomputed operators.
pub fn complexity_curve_with(
    r: f64,
    ops: &Arc<DeformOperators>,
    labeled_indices: &[usize],
    mu_grid: &[f64],
) -> Result<ComplexityCurve> {
    check_radius(r)?;
    validate_mu_grid(mu_grid)?;
    let n_anchor = ops.anchors().nrows();
    if let Some(&bad) = labeled_indices.iter().find(|&&i| i >= n_anchor) {
        return Err(Error::invalid(format!(
            "labeled index {bad} out of range for {n_anchor} anchors"
        )));
    }
    let base_diag = DVector::from_iterator(
        labeled_indices.len(),
        labeled_indices.iter().map(|&i| ops.anchor_gram()[(i, i)]),
    );
    let results: Vec<Result<f64>> = mu_grid
        .par_iter()
        .map(|&mu| {
            let dk = DeformedKernel::with_operators(ops.clone(), mu)?;
            let def = dk.deformation_diag_at_anchors(labeled_indices)?;
            rad_upper_mr(r, &base_diag, &def)
        })
        .collect();

    let mut upper = Vec::with_capacity(mu_grid.len());
    let mut failures = Vec::with_capacity(mu_grid.len());
    for (res, mu) in results.into_iter().zip(mu_grid) {
        match res {
            Ok(v) => {
                upper.push(v);
                failures.push(None);
            }
            Err(e) => {
                log::warn!("complexity curve: mu = {mu} failed: {e}");
                upper.push(f64::NAN);
                failures.push(Some(e.to_string()));
            }
        }
    }
    let lower = upper.iter().map(|v| v / std::f64::consts::SQRT_2).collect();
    let mut curve = ComplexityCurve {
        mu_grid: mu_grid.to_vec(),
        upper_values: upper,
        lower_values: lower,
        failures,
        elbow_index: None,
    };
    if curve.valid_indices().len() >= 3 {
        curve.elbow_index = Some(elbow_select(&curve)?);
    }
    Ok(curve)
}
