//! Square-loss learners: supervised kernel ridge regression, the
//! semi-supervised Laplacian-regularized solution (solved jointly or as ridge
//! regression in the deformed RKHS), the penalty-constrained form, and metrics.
//!
//! The semi-supervised objective is
//!
//! ```text
//! (1/n) Σ_i (f(x_i) - y_i)² + λ_a ‖f‖²_H + μ f_Uᵗ L f_U
//! ```
//!
//! over `f` in the base RKHS, with `U` all `n + m` points. Dividing by `λ_a`
//! shows it is ridge regression in the deformed RKHS with weight `μ/λ_a`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::deform::{DeformOperators, DeformedKernel};
use crate::error::{Error, Result};
use crate::graph::{manifold_penalty, GraphLaplacian};
use crate::kernel::{cross_gram, gram, KernelSpec};
use crate::linalg::factor_with_jitter;

/// Upper end of the μ search in [`solve_constrained`].
pub const MU_MAX: f64 = 1e6;
/// Maximum bisection steps in [`solve_constrained`].
pub const MAX_BISECTIONS: usize = 80;
/// Relative slack on τ for the endpoint checks of [`solve_constrained`].
pub const TAU_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Supervised,
    Joint,
    Deformed,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Method::Supervised),
            "joint" => Ok(Method::Joint),
            "deformed" => Ok(Method::Deformed),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (supervised|joint|deformed)"
            ))),
        }
    }
}

/// Where the deformed kernel of a [`Method::Deformed`] model came from.
#[derive(Debug, Clone)]
struct Deformation {
    kernel: DeformedKernel,
    graph_sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    method: Method,
    base: KernelSpec,
    anchors: DMatrix<f64>,
    coefficients: DVector<f64>,
    lambda_a: f64,
    mu: f64,
    deformation: Option<Deformation>,
    /// `f = Σ c_j k(e_j, ·)` in the base kernel; equals (anchors, coefficients)
    /// except on the deformed path, where the deformation is folded in.
    expansion_points: DMatrix<f64>,
    expansion_coeffs: DVector<f64>,
}

impl TrainedModel {
    fn plain(
        method: Method,
        base: KernelSpec,
        anchors: DMatrix<f64>,
        coefficients: DVector<f64>,
        lambda_a: f64,
        mu: f64,
    ) -> Self {
        TrainedModel {
            method,
            base,
            expansion_points: anchors.clone(),
            expansion_coeffs: coefficients.clone(),
            anchors,
            coefficients,
            lambda_a,
            mu,
            deformation: None,
        }
    }

    fn deformed(
        base: KernelSpec,
        anchors: DMatrix<f64>,
        coefficients: DVector<f64>,
        lambda_a: f64,
        mu: f64,
        kernel: DeformedKernel,
        graph_sigma: Option<f64>,
    ) -> Result<Self> {
        let gamma = kernel.anchor_correction(&anchors, &coefficients)?;
        let u = kernel.anchors();
        let (p, q, d) = (anchors.nrows(), u.nrows(), anchors.ncols());
        let mut pts = DMatrix::zeros(p + q, d);
        pts.rows_mut(0, p).copy_from(&anchors);
        pts.rows_mut(p, q).copy_from(u);
        let mut c = DVector::zeros(p + q);
        c.rows_mut(0, p).copy_from(&coefficients);
        c.rows_mut(p, q).copy_from(&(-gamma));
        Ok(TrainedModel {
            method: Method::Deformed,
            base,
            anchors,
            coefficients,
            lambda_a,
            mu,
            deformation: Some(Deformation {
                kernel,
                graph_sigma,
            }),
            expansion_points: pts,
            expansion_coeffs: c,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn base_kernel(&self) -> &KernelSpec {
        &self.base
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    /// Intrinsic weight in the joint parameterization (0 for supervised).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The deformed kernel of a deformed-path model.
    pub fn deformed_kernel(&self) -> Option<&DeformedKernel> {
        self.deformation.as_ref().map(|d| &d.kernel)
    }

    /// `f(x)` for each row of `points`.
    pub fn predict_batch(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        if points.ncols() != self.anchors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.anchors.ncols(),
                found: points.ncols(),
            });
        }
        if points.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(cross_gram(&self.base, points, &self.expansion_points)? * &self.expansion_coeffs)
    }

    /// `‖f‖²` in the base RKHS.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let k = gram(&self.base, &self.expansion_points)?;
        Ok(self
            .expansion_coeffs
            .dot(&(k.entries() * &self.expansion_coeffs)))
    }
}

pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    let p = DMatrix::from_row_slice(1, x.len(), x);
    Ok(model.predict_batch(&p)?[0])
}

/// `sign(f(x))` with `sign(0) = +1`.
pub fn classify(model: &TrainedModel, x: &[f64]) -> Result<i8> {
    Ok(sign(predict(model, x)?))
}

fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

fn check_lambda(lambda_a: f64) -> Result<()> {
    if !(lambda_a > 0.0 && lambda_a.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda_a must be positive, got {lambda_a}"
        )));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!(
            "mu must be finite and >= 0, got {mu}"
        )));
    }
    Ok(())
}

fn check_labeled(ds: &Dataset) -> Result<()> {
    if ds.n() == 0 {
        return Err(Error::invalid("training needs at least one labeled point"));
    }
    Ok(())
}

fn check_graph(ds: &Dataset, gl: &GraphLaplacian) -> Result<()> {
    if gl.size() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: gl.size(),
        });
    }
    Ok(())
}

/// Solves `(K_ll + λ_a·n·I) α = y` over the labeled points.
pub fn train_supervised(ds: &Dataset, base: KernelSpec, lambda_a: f64) -> Result<TrainedModel> {
    check_labeled(ds)?;
    check_lambda(lambda_a)?;
    let lab = ds.labeled_part();
    let n = lab.len();
    let mut a = gram(&base, lab.points())?.into_inner();
    for i in 0..n {
        a[(i, i)] += lambda_a * n as f64;
    }
    let f = factor_with_jitter(&a, a.trace(), "supervised system")?;
    let alpha = f.lu.solve_vec(&ds.targets())?;
    Ok(TrainedModel::plain(
        Method::Supervised,
        base,
        lab.points().clone(),
        alpha,
        lambda_a,
        0.0,
    ))
}

/// Coefficients over all `n + m` points solving
/// `(JᵗJ K + λ_a·n·I + μ·n·L K) α = Jᵗ y`, where `J` selects the labeled rows.
pub fn train_semi_joint(
    ds: &Dataset,
    base: KernelSpec,
    gl: &GraphLaplacian,
    lambda_a: f64,
    mu: f64,
) -> Result<TrainedModel> {
    check_graph(ds, gl)?;
    let k = gram(&base, ds.points())?.into_inner();
    let lk = gl.matrix() * &k;
    joint_with(ds, base, gl, &k, &lk, lambda_a, mu)
}

fn joint_with(
    ds: &Dataset,
    base: KernelSpec,
    gl: &GraphLaplacian,
    k: &DMatrix<f64>,
    lk: &DMatrix<f64>,
    lambda_a: f64,
    mu: f64,
) -> Result<TrainedModel> {
    check_labeled(ds)?;
    check_lambda(lambda_a)?;
    check_mu(mu)?;
    check_graph(ds, gl)?;
    let (n, total) = (ds.n(), ds.len());
    let nf = n as f64;
    let mut a = lk * (mu * nf);
    for j in 0..total {
        for i in 0..n {
            a[(i, j)] += k[(i, j)];
        }
    }
    for i in 0..total {
        a[(i, i)] += lambda_a * nf;
    }
    let mut rhs = DVector::zeros(total);
    rhs.rows_mut(0, n).copy_from(&ds.targets());
    let f = factor_with_jitter(&a, a.trace().abs(), "joint semi-supervised system")?;
    let alpha = f.lu.solve_vec(&rhs)?;
    Ok(TrainedModel::plain(
        Method::Joint,
        base,
        ds.points().clone(),
        alpha,
        lambda_a,
        mu,
    ))
}

/// Ridge regression `(K̃_ll + λ_a·n·I) β = y` in the deformed RKHS built on all
/// points with deformation weight `μ/λ_a`, so that it solves the same problem
/// as [`train_semi_joint`] with the same `(λ_a, μ)`.
pub fn train_semi_deformed(
    ds: &Dataset,
    base: KernelSpec,
    gl: &GraphLaplacian,
    lambda_a: f64,
    mu: f64,
) -> Result<TrainedModel> {
    check_labeled(ds)?;
    check_lambda(lambda_a)?;
    check_mu(mu)?;
    check_graph(ds, gl)?;
    let ops = Arc::new(DeformOperators::new(
        base,
        ds.points().clone(),
        gl.matrix().clone(),
    )?);
    let dk = DeformedKernel::with_operators(ops, mu / lambda_a)?;
    deformed_with(ds, dk, lambda_a, mu, gl.sigma_w())
}

fn deformed_with(
    ds: &Dataset,
    dk: DeformedKernel,
    lambda_a: f64,
    mu: f64,
    graph_sigma: Option<f64>,
) -> Result<TrainedModel> {
    let n = ds.n();
    let lab = ds.labeled_part();
    let mut a = dk.gram(lab.points())?.into_inner();
    for i in 0..n {
        a[(i, i)] += lambda_a * n as f64;
    }
    let f = factor_with_jitter(&a, a.trace().abs(), "deformed ridge system")?;
    let beta = f.lu.solve_vec(&ds.targets())?;
    TrainedModel::deformed(
        *dk.base(),
        lab.points().clone(),
        beta,
        lambda_a,
        mu,
        dk,
        graph_sigma,
    )
}

/// `(1/(n+m)²) f_Uᵗ L f_U` for a model over the points the graph was built on.
pub fn empirical_penalty(
    model: &TrainedModel,
    points: &DMatrix<f64>,
    gl: &GraphLaplacian,
) -> Result<f64> {
    let f_u = model.predict_batch(points)?;
    manifold_penalty(gl, &f_u)
}

/// `(1/n) Σ (f(x_i) - y_i)² + λ_a ‖f‖²_H + μ f_Uᵗ L f_U`.
pub fn objective(model: &TrainedModel, ds: &Dataset, gl: &GraphLaplacian, mu: f64) -> Result<f64> {
    check_graph(ds, gl)?;
    let fit = mse(model, ds)?;
    let f_u = model.predict_batch(ds.points())?;
    Ok(fit + model.lambda_a * model.rkhs_norm_sq()? + mu * gl.quadratic_form(&f_u)?)
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub model: TrainedModel,
    pub mu: f64,
    /// `μ·(n+m)²`, the same weight on the normalized penalty.
    pub lambda: f64,
    /// `R̂(f_μ)` at the returned μ.
    pub penalty: f64,
    pub iterations: usize,
}

/// Smallest μ in `[0, MU_MAX]` whose joint solution has `R̂(f_μ) ≤ τ`, by
/// bisection on the monotone map `μ ↦ R̂(f_μ)` inside a decade bracket. Returns μ = 0 when the
/// unconstrained solution already satisfies the budget.
pub fn solve_constrained(
    ds: &Dataset,
    base: KernelSpec,
    gl: &GraphLaplacian,
    lambda_a: f64,
    tau: f64,
) -> Result<ConstrainedSolution> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    check_labeled(ds)?;
    check_lambda(lambda_a)?;
    check_graph(ds, gl)?;
    let ops = Arc::new(DeformOperators::new(
        base,
        ds.points().clone(),
        gl.matrix().clone(),
    )?);
    let k = ops.anchor_gram();
    let lk = gl.matrix() * k;
    let size = ds.len() as f64;
    let eval = |mu: f64| -> Result<(TrainedModel, f64)> {
        match joint_with(ds, base, gl, k, &lk, lambda_a, mu) {
            Ok(m) => {
                let pen = manifold_penalty(gl, &(k * m.coefficients()))?;
                Ok((m, pen))
            }
            // Large μ can make the joint system too ill-conditioned to factor;
            // the deformed path solves the same problem through I/(μ/λ_a) + LK.
            Err(Error::Numerical { msg, .. }) => {
                log::warn!("mu = {mu}: {msg}; using the deformed-kernel path");
                let dk = DeformedKernel::with_operators(ops.clone(), mu / lambda_a)?;
                let m = deformed_with(ds, dk, lambda_a, mu, gl.sigma_w())?;
                let pen = empirical_penalty(&m, ds.points(), gl)?;
                Ok((m, pen))
            }
            Err(e) => Err(e),
        }
    };
    let done = |model, mu: f64, penalty, iterations| ConstrainedSolution {
        model,
        mu,
        lambda: mu * size * size,
        penalty,
        iterations,
    };

    let (m0, p0) = eval(0.0)?;
    if p0 <= tau * (1.0 + TAU_SLACK) {
        return Ok(done(m0, 0.0, p0, 0));
    }
    // Bracket upwards by decades so that extreme, ill-conditioned μ are only
    // factored when the budget actually needs them.
    let mut lo = 0.0;
    let mut probe: f64 = 1e-6;
    let (mut hi, mut best, mut best_pen) = loop {
        let mu = probe.min(MU_MAX);
        let (m, pen) = eval(mu)?;
        if pen <= tau {
            break (mu, m, pen);
        }
        if mu >= MU_MAX {
            // Round-off floor: R̂ cannot be driven below ~1e-9 of its unconstrained value.
            if pen <= tau * (1.0 + TAU_SLACK) + 1e-9 * p0 {
                return Ok(done(m, mu, pen, 0));
            }
            return Err(Error::Infeasible { achieved: pen, tau });
        }
        lo = mu;
        probe *= 10.0;
    };
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS && hi - lo > 1e-12 * hi {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (m, pen) = eval(mid)?;
        if pen <= tau {
            hi = mid;
            best = m;
            best_pen = pen;
        } else {
            lo = mid;
        }
    }
    Ok(done(best, hi, best_pen, iterations))
}

/// Fraction of labeled points misclassified.
pub fn zero_one_error(model: &TrainedModel, ds: &Dataset) -> Result<f64> {
    let (pred, y) = labeled_predictions(model, ds)?;
    let wrong = pred
        .iter()
        .zip(y.iter())
        .filter(|(p, y)| sign(**p) as f64 != **y)
        .count();
    Ok(wrong as f64 / y.len() as f64)
}

/// Mean squared error over labeled points.
pub fn mse(model: &TrainedModel, ds: &Dataset) -> Result<f64> {
    let (pred, y) = labeled_predictions(model, ds)?;
    Ok((pred - &y).norm_squared() / y.len() as f64)
}

fn labeled_predictions(model: &TrainedModel, ds: &Dataset) -> Result<(DVector<f64>, DVector<f64>)> {
    if ds.n() == 0 {
        return Err(Error::invalid("metrics need labeled points"));
    }
    let pred = model.predict_batch(&ds.points().rows(0, ds.n()).into_owned())?;
    Ok((pred, ds.targets()))
}

#[derive(Serialize, Deserialize)]
struct DeformationRecord {
    /// All graph points (the deformation anchors).
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph_sigma: Option<f64>,
    /// Stored only when the graph cannot be rebuilt from `graph_sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    laplacian: Option<Vec<Vec<f64>>>,
    deform_weight: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    method: Method,
    kernel: KernelSpec,
    lambda_a: f64,
    mu: f64,
    anchors: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deformation: Option<DeformationRecord>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid(format!(
            "{what} must be a nonempty rectangular array"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<serde_json::Value> {
        let deformation = self.deformation.as_ref().map(|d| DeformationRecord {
            points: rows_of(d.kernel.anchors()),
            graph_sigma: d.graph_sigma,
            laplacian: d
                .graph_sigma
                .is_none()
                .then(|| rows_of(d.kernel.operators().laplacian())),
            deform_weight: d.kernel.mu(),
        });
        let rec = ModelRecord {
            method: self.method,
            kernel: self.base,
            lambda_a: self.lambda_a,
            mu: self.mu,
            anchors: rows_of(&self.anchors),
            coefficients: self.coefficients.iter().copied().collect(),
            deformation,
        };
        Ok(serde_json::to_value(rec)?)
    }

    /// Restores a model; deformed-path models rebuild their factorization.
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_value(value)?;
        rec.kernel.validate()?;
        let anchors = matrix_of(&rec.anchors, "anchors")?;
        if rec.coefficients.len() != anchors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: anchors.nrows(),
                found: rec.coefficients.len(),
            });
        }
        let coefficients = DVector::from_vec(rec.coefficients);
        match (rec.method, rec.deformation) {
            (Method::Deformed, Some(d)) => {
                let points = matrix_of(&d.points, "deformation points")?;
                let lap = match (d.graph_sigma, d.laplacian) {
                    (Some(s), _) => GraphLaplacian::build(&points, s)?.matrix().clone(),
                    (None, Some(l)) => matrix_of(&l, "laplacian")?,
                    (None, None) => return Err(Error::invalid("deformed model lacks its graph")),
                };
                let ops = Arc::new(DeformOperators::new(rec.kernel, points, lap)?);
                let dk = DeformedKernel::with_operators(ops, d.deform_weight)?;
                TrainedModel::deformed(
                    rec.kernel,
                    anchors,
                    coefficients,
                    rec.lambda_a,
                    rec.mu,
                    dk,
                    d.graph_sigma,
                )
            }
            (Method::Deformed, None) => {
                Err(Error::invalid("deformed model lacks its deformation block"))
            }
            (method, _) => Ok(TrainedModel::plain(
                method,
                rec.kernel,
                anchors,
                coefficients,
                rec.lambda_a,
                rec.mu,
            )),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()?)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(serde_json::from_str(&text)?)
    }
}
