//! The manifold-regularized kernel
//!
//! ```text
//! k̃(x, y) = k(x, y) - k_xᵗ (I/μ + L K)⁻¹ L k_y
//! ```
//!
//! which reproduces the RKHS whose inner product is `⟨f, g⟩_H + μ f_Uᵗ L g_U`
//! over the anchor set `U`. `K` is the base Gram on `U` and `k_x` the vector of
//! base-kernel values between the anchors and `x`. At `μ = 1` this is
//! `(I + LK)⁻¹`; at `μ = 0` the deformation term is defined as zero.
//!
//! Restricted to the anchors the deformed Gram equals `(K⁻¹ + μL)⁻¹`, so it
//! shrinks in the Loewner order as `μ` grows and never exceeds `K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{cross_gram, gram, GramMatrix, KernelSpec};
use crate::linalg::{factor_with_jitter, Factored};

/// Asymmetry of an assembled deformed Gram above this is reported as an error.
pub const MAX_GRAM_ASYMMETRY: f64 = 1e-6;

/// The μ-independent pieces: anchors, `K`, `L`, and `LK`.
#[derive(Debug, Clone)]
pub struct DeformOperators {
    base: KernelSpec,
    anchors: DMatrix<f64>,
    k_uu: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    lk: DMatrix<f64>,
    laplacian_is_zero: bool,
}

impl DeformOperators {
    pub fn new(base: KernelSpec, anchors: DMatrix<f64>, laplacian: DMatrix<f64>) -> Result<Self> {
        let k_uu = gram(&base, &anchors)?.into_inner();
        Self::with_gram(base, anchors, laplacian, k_uu)
    }

    /// Reuses an already computed base Gram on the anchors.
    pub fn with_gram(
        base: KernelSpec,
        anchors: DMatrix<f64>,
        laplacian: DMatrix<f64>,
        k_uu: DMatrix<f64>,
    ) -> Result<Self> {
        base.validate()?;
        let n = anchors.nrows();
        if n == 0 {
            return Err(Error::invalid("deformed kernel needs at least one anchor"));
        }
        if laplacian.nrows() != n || laplacian.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: laplacian.nrows(),
            });
        }
        if k_uu.nrows() != n || k_uu.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k_uu.nrows(),
            });
        }
        let scale = laplacian.amax().max(1e-300);
        if (&laplacian - laplacian.transpose()).amax() > 1e-10 * scale {
            return Err(Error::invalid("laplacian must be symmetric"));
        }
        let lk = &laplacian * &k_uu;
        let laplacian_is_zero = laplacian.iter().all(|v| *v == 0.0);
        Ok(DeformOperators {
            base,
            anchors,
            k_uu,
            laplacian,
            lk,
            laplacian_is_zero,
        })
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn anchor_gram(&self) -> &DMatrix<f64> {
        &self.k_uu
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }
}

#[derive(Debug, Clone)]
pub struct DeformedKernel {
    ops: Arc<DeformOperators>,
    mu: f64,
    /// `None` when the deformation vanishes (μ = 0 or L = 0).
    factor: Option<Factored>,
}

/// Builds `k̃` for anchors `U`, Laplacian `L` on `U`, and weight `mu`; factors
/// `I/μ + LK` once.
pub fn build_deformed(
    base: KernelSpec,
    anchors: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    mu: f64,
) -> Result<DeformedKernel> {
    let ops = DeformOperators::new(base, anchors.clone(), laplacian.clone())?;
    DeformedKernel::with_operators(Arc::new(ops), mu)
}

impl DeformedKernel {
    pub fn with_operators(ops: Arc<DeformOperators>, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "mu must be finite and >= 0, got {mu}"
            )));
        }
        let factor = if mu == 0.0 || ops.laplacian_is_zero {
            None
        } else {
            let n = ops.anchors.nrows();
            let mut a = ops.lk.clone();
            for i in 0..n {
                a[(i, i)] += 1.0 / mu;
            }
            Some(factor_with_jitter(
                &a,
                ops.lk.trace().abs(),
                "deformed kernel (I/mu + LK)",
            )?)
        };
        Ok(DeformedKernel { ops, mu, factor })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn operators(&self) -> &Arc<DeformOperators> {
        &self.ops
    }

    pub fn base(&self) -> &KernelSpec {
        &self.ops.base
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.ops.anchors
    }

    /// Diagonal jitter applied to `I/μ + LK`, if the first factorization was near-singular.
    pub fn jitter(&self) -> Option<f64> {
        self.factor.as_ref().and_then(|f| f.jitter)
    }

    /// Reciprocal condition estimate of `I/μ + LK` (1.0 when there is nothing to factor).
    pub fn rcond(&self) -> f64 {
        self.factor.as_ref().map_or(1.0, |f| f.rcond)
    }

    fn check_dim(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.ops.anchors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ops.anchors.ncols(),
                found: points.ncols(),
            });
        }
        Ok(())
    }

    /// `K_Uᵀ-columns` for `points`: `C_ij = k(u_i, p_j)`.
    fn anchor_cross(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(points)?;
        cross_gram(&self.ops.base, &self.ops.anchors, points)
    }

    /// `k̃(a_i, b_j)` for all pairs of rows.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let mut out = cross_gram(&self.ops.base, a, b)?;
        if let Some(f) = &self.factor {
            let ka = self.anchor_cross(a)?;
            let kb = self.anchor_cross(b)?;
            let z = f.lu.solve_mat(&(&self.ops.laplacian * kb))?;
            out -= ka.transpose() * z;
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let a = DMatrix::from_row_slice(1, x.len(), x);
        let b = DMatrix::from_row_slice(1, y.len(), y);
        Ok(self.cross(&a, &b)?[(0, 0)])
    }

    /// Deformed Gram over the rows of `points`, symmetrized as `(A + Aᵗ)/2`.
    /// Asymmetry above [`MAX_GRAM_ASYMMETRY`] before symmetrization is an error.
    pub fn gram(&self, points: &DMatrix<f64>) -> Result<GramMatrix> {
        let (g, _) = self.gram_with_asymmetry(points)?;
        Ok(g)
    }

    /// As [`gram`](Self::gram), also returning the pre-symmetrization asymmetry.
    pub fn gram_with_asymmetry(&self, points: &DMatrix<f64>) -> Result<(GramMatrix, f64)> {
        if points.nrows() == 0 {
            return Err(Error::invalid("deformed gram of an empty point set"));
        }
        let raw = self.cross(points, points)?;
        let asym = (&raw - raw.transpose()).amax();
        if asym > MAX_GRAM_ASYMMETRY {
            return Err(Error::Numerical {
                msg: format!("deformed gram asymmetric by {asym:.3e}"),
                rcond: self.rcond(),
            });
        }
        let sym = (&raw + raw.transpose()) * 0.5;
        Ok((GramMatrix::from_symmetric_unchecked(sym), asym))
    }

    /// `k_xᵗ (I/μ + LK)⁻¹ L k_x` for each row `x` of `points`.
    pub fn deformation_diag(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(points)?;
        let p = points.nrows();
        let Some(f) = &self.factor else {
            return Ok(DVector::zeros(p));
        };
        let kp = self.anchor_cross(points)?;
        let z = f.lu.solve_mat(&(&self.ops.laplacian * &kp))?;
        Ok(DVector::from_iterator(
            p,
            (0..p).map(|j| kp.column(j).dot(&z.column(j))),
        ))
    }

    /// Deformation term at anchors `idx`, reusing the cached `LK` columns.
    pub fn deformation_diag_at_anchors(&self, idx: &[usize]) -> Result<DVector<f64>> {
        let n = self.ops.anchors.nrows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "anchor index {bad} out of range for {n} anchors"
            )));
        }
        let Some(f) = &self.factor else {
            return Ok(DVector::zeros(idx.len()));
        };
        let rhs = self.ops.lk.select_columns(idx);
        let z = f.lu.solve_mat(&rhs)?;
        Ok(DVector::from_iterator(
            idx.len(),
            idx.iter()
                .enumerate()
                .map(|(c, &i)| self.ops.k_uu.column(i).dot(&z.column(c))),
        ))
    }

    /// `k̃(x, x)` for each row.
    pub fn diag(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        let base: Vec<f64> = (0..points.nrows())
            .map(|i| {
                let r: Vec<f64> = points.row(i).iter().copied().collect();
                self.ops.base.eval(&r, &r)
            })
            .collect::<Result<_>>()?;
        Ok(DVector::from_vec(base) - self.deformation_diag(points)?)
    }

    /// For `f = Σ β_i k̃(p_i, ·)`, returns `γ` such that
    /// `f = Σ β_i k(p_i, ·) - Σ_j γ_j k(u_j, ·)`, i.e. `γ = L (I/μ + LK)⁻ᵗ K_{U,P} β`.
    pub fn anchor_correction(
        &self,
        points: &DMatrix<f64>,
        beta: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if beta.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                found: beta.len(),
            });
        }
        let n = self.ops.anchors.nrows();
        let Some(f) = &self.factor else {
            return Ok(DVector::zeros(n));
        };
        let kp = self.anchor_cross(points)?;
        let w = f.lu.solve_transpose_vec(&(kp * beta))?;
        Ok(&self.ops.laplacian * w)
    }
}

/// A rectangular region of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Smallest box containing the 2-D `points`, padded by `margin` on every side.
    pub fn around(points: &DMatrix<f64>, margin: f64) -> Result<Self> {
        if points.ncols() != 2 || points.nrows() == 0 {
            return Err(Error::invalid("bounding box needs nonempty 2-D points"));
        }
        let xs = points.column(0);
        let ys = points.column(1);
        Ok(BoundingBox {
            x_min: xs.min() - margin,
            x_max: xs.max() + margin,
            y_min: ys.min() - margin,
            y_max: ys.max() + margin,
        })
    }
}

/// One grid sample of a kernel slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSample {
    pub gx: f64,
    pub gy: f64,
    pub value: f64,
}

/// `k̃(x_ref, ·)` on a uniform `grid × grid` lattice over `bbox` (2-D only).
/// Rows are ordered with `gx` varying slowest.
pub fn kernel_slice(
    dk: &DeformedKernel,
    x_ref: &[f64],
    bbox: BoundingBox,
    grid: usize,
) -> Result<Vec<SliceSample>> {
    if grid < 2 {
        return Err(Error::invalid(format!(
            "grid size must be >= 2, got {grid}"
        )));
    }
    if x_ref.len() != 2 || dk.anchors().ncols() != 2 {
        return Err(Error::invalid(
            "kernel slices are only defined for 2-D data",
        ));
    }
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (grid - 1) as f64;
    let mut coords = Vec::with_capacity(grid * grid * 2);
    for i in 0..grid {
        for j in 0..grid {
            coords.push(step(bbox.x_min, bbox.x_max, i));
            coords.push(step(bbox.y_min, bbox.y_max, j));
        }
    }
    let probe = DMatrix::from_row_slice(grid * grid, 2, &coords);
    let reference = DMatrix::from_row_slice(1, 2, x_ref);
    let values = dk.cross(&reference, &probe)?;
    Ok((0..grid * grid)
        .map(|k| SliceSample {
            gx: coords[2 * k],
            gy: coords[2 * k + 1],
            value: values[(0, k)],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, GraphLaplacian};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.5..1.5))
    }

    fn random_laplacian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random_range(0.0..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        laplacian(w).unwrap().matrix().clone()
    }

    fn rows(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
        m.row(i).iter().copied().collect()
    }

    #[test]
    fn mu_zero_and_zero_laplacian_leave_kernel_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_points(&mut rng, 8);
        let probe = random_points(&mut rng, 5);
        let base = KernelSpec::gaussian(0.5).unwrap();
        let k = cross_gram(&base, &probe, &probe).unwrap();
        let l = random_laplacian(&mut rng, 8);
        let d0 = build_deformed(base, &u, &l, 0.0).unwrap();
        assert_eq!(d0.cross(&probe, &probe).unwrap(), k);
        let dz = build_deformed(base, &u, &DMatrix::zeros(8, 8), 3.0).unwrap();
        assert_eq!(dz.cross(&probe, &probe).unwrap(), k);
        let g = d0.gram(&u).unwrap();
        assert_eq!(g.entries(), gram(&base, &u).unwrap().entries());
    }

    #[test]
    fn two_anchor_example_matches_explicit_inverse() {
        // Anchors at distance 1, gaussian sigma = 1, graph sigma_w = 1, mu = 1.
        let u = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let base = KernelSpec::gaussian(1.0).unwrap();
        let gl = GraphLaplacian::build(&u, 1.0).unwrap();
        let dk = build_deformed(base, &u, gl.matrix(), 1.0).unwrap();

        let e = (-1.0f64).exp();
        // K = [[1, e], [e, 1]], L = [[e, -e], [-e, e]]
        // LK = e(1-e) [[1, -1], [-1, 1]];  M = I + LK
        let c = e * (1.0 - e);
        let (m11, m12, m21, m22) = (1.0 + c, -c, -c, 1.0 + c);
        let det = m11 * m22 - m12 * m21;
        let (i11, i12, i21, i22) = (m22 / det, -m12 / det, -m21 / det, m11 / det);
        let kx = [1.0, e];
        let lkx = [e * kx[0] - e * kx[1], -e * kx[0] + e * kx[1]];
        let sol = [i11 * lkx[0] + i12 * lkx[1], i21 * lkx[0] + i22 * lkx[1]];
        let want = 1.0 - (kx[0] * sol[0] + kx[1] * sol[1]);

        let got = dk.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        assert!(got < 1.0);
    }

    #[test]
    fn anchor_gram_equals_inverse_identity() {
        // On the anchors, K̃ = (K⁻¹ + μL)⁻¹.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_points(&mut rng, 10);
        let base = KernelSpec::gaussian(2.0).unwrap();
        let l = random_laplacian(&mut rng, 10);
        let k = gram(&base, &u).unwrap().into_inner();
        for mu in [0.01, 1.0, 7.0] {
            let dk = build_deformed(base, &u, &l, mu).unwrap();
            let via_kernel = dk.gram(&u).unwrap().into_inner();
            let oracle = (k.clone().try_inverse().unwrap() + &l * mu)
                .try_inverse()
                .unwrap();
            let rel = (&via_kernel - &oracle).amax() / oracle.amax();
            assert!(rel < 1e-6, "mu={mu}: rel {rel}");
        }
    }

    #[test]
    fn mu_one_matches_unscaled_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_points(&mut rng, 6);
        let base = KernelSpec::gaussian(0.8).unwrap();
        let l = random_laplacian(&mut rng, 6);
        let k = gram(&base, &u).unwrap().into_inner();
        let dk = build_deformed(base, &u, &l, 1.0).unwrap();
        let x = [0.2, -0.4];
        let y = [-0.9, 0.1];
        let kx = crate::kernel::kernel_vector(&base, &u, &x).unwrap();
        let ky = crate::kernel::kernel_vector(&base, &u, &y).unwrap();
        let m = DMatrix::identity(6, 6) + &l * &k;
        let want = base.eval(&x, &y).unwrap() - kx.dot(&(m.try_inverse().unwrap() * (&l * ky)));
        assert!((dk.eval(&x, &y).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_undeformed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_points(&mut rng, 12);
        let base = KernelSpec::gaussian(0.5).unwrap();
        let l = random_laplacian(&mut rng, 12);
        let dk = build_deformed(base, &u, &l, 5.0).unwrap();
        let x = [20.0, 20.0];
        let y = [20.1, 19.9];
        assert!((dk.eval(&x, &y).unwrap() - base.eval(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_anchor_has_no_deformation() {
        let u = DMatrix::from_row_slice(1, 2, &[0.3, 0.3]);
        let base = KernelSpec::gaussian(0.5).unwrap();
        let probe = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.3, 0.3, 1.0, -1.0]);
        for mu in [0.0, 0.1, 100.0] {
            let dk = build_deformed(base, &u, &DMatrix::zeros(1, 1), mu).unwrap();
            let d = dk.diag(&probe).unwrap();
            assert!(d.iter().all(|v| (*v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn circles_diag_non_increasing_in_mu() {
        let ds = crate::data::gen_circles(40, (1.0, 2.0), 0.05, 2).unwrap();
        let base = KernelSpec::gaussian(0.5).unwrap();
        let gl = GraphLaplacian::build(ds.points(), 0.08).unwrap();
        let ops =
            Arc::new(DeformOperators::new(base, ds.points().clone(), gl.matrix().clone()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let probe = random_points(&mut rng, 15);
        let mut prev_probe = DVector::from_element(15, 1.0);
        let mut prev_anchor = DVector::from_element(80, 1.0);
        let all: Vec<usize> = (0..80).collect();
        for mu in [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 1e3, 1e5] {
            let dk = DeformedKernel::with_operators(ops.clone(), mu).unwrap();
            let d = dk.diag(&probe).unwrap();
            for i in 0..15 {
                assert!(d[i] <= prev_probe[i] + 1e-10, "mu {mu} probe {i}");
                assert!(d[i] >= -1e-10);
            }
            let da = DVector::from_element(80, 1.0) - dk.deformation_diag_at_anchors(&all).unwrap();
            for i in 0..80 {
                assert!(da[i] <= prev_anchor[i] + 1e-10, "mu {mu} anchor {i}");
            }
            prev_probe = d;
            prev_anchor = da;
        }
    }

    #[test]
    fn anchor_diag_matches_generic_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_points(&mut rng, 15);
        let base = KernelSpec::gaussian(0.5).unwrap();
        let l = random_laplacian(&mut rng, 15);
        let dk = build_deformed(base, &u, &l, 0.3).unwrap();
        let idx = [0, 3, 14];
        let fast = dk.deformation_diag_at_anchors(&idx).unwrap();
        let slow = dk.deformation_diag(&u.select_rows(&idx)).unwrap();
        assert!((fast - slow).amax() < 1e-12);
        assert!(dk.deformation_diag_at_anchors(&[15]).is_err());
    }

    #[test]
    fn anchor_correction_reproduces_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_points(&mut rng, 14);
        let base = KernelSpec::gaussian(0.6).unwrap();
        let l = random_laplacian(&mut rng, 14);
        let dk = build_deformed(base, &u, &l, 2.0).unwrap();
        let p = u.rows(0, 4).into_owned();
        let beta = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let gamma = dk.anchor_correction(&p, &beta).unwrap();
        let probe = random_points(&mut rng, 6);
        let direct = dk.cross(&p, &probe).unwrap().transpose() * &beta;
        let folded = cross_gram(&base, &p, &probe).unwrap().transpose() * &beta
            - cross_gram(&base, &u, &probe).unwrap().transpose() * gamma;
        assert!((direct - folded).amax() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_and_bad_mu() {
        let u = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let base = KernelSpec::gaussian(1.0).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let dk = build_deformed(base, &u, &l, 1.0).unwrap();
        assert!(matches!(
            dk.eval(&[0.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(build_deformed(base, &u, &l, -1.0).is_err());
        assert!(build_deformed(base, &u, &l, f64::NAN).is_err());
        assert!(build_deformed(base, &u, &DMatrix::zeros(3, 3), 1.0).is_err());
    }

    #[test]
    fn slice_grid_shape() {
        let u = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let base = KernelSpec::gaussian(1.0).unwrap();
        let dk = build_deformed(base, &u, &DMatrix::zeros(2, 2), 0.0).unwrap();
        let bbox = BoundingBox {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        };
        let s = kernel_slice(&dk, &[0.0, 0.0], bbox, 2).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!((s[1].gx, s[1].gy), (-1.0, 1.0));
        assert!(kernel_slice(&dk, &[0.0, 0.0], bbox, 1).is_err());
        // Undeformed slice is radially symmetric about the reference.
        let s = kernel_slice(&dk, &[0.0, 0.0], bbox, 5).unwrap();
        for a in &s {
            for b in &s {
                if (a.gx.hypot(a.gy) - b.gx.hypot(b.gy)).abs() < 1e-12 {
                    assert!((a.value - b.value).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn deformed_gram_psd_symmetric_and_dominated(seed in any::<u64>(), n in 1usize..30, mu in 0.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_points(&mut rng, n);
            let l = random_laplacian(&mut rng, n);
            let base = KernelSpec::gaussian(0.7).unwrap();
            let dk = build_deformed(base, &u, &l, mu).unwrap();
            let probe = random_points(&mut rng, 10);
            let (g, asym) = dk.gram_with_asymmetry(&probe).unwrap();
            prop_assert!(asym <= 1e-9);
            let eig = SymmetricEigen::new(g.entries().clone()).eigenvalues;
            prop_assert!(eig.min() >= -1e-8 * g.trace());
            for i in 0..10 {
                prop_assert!(g.entries()[(i, i)] <= 1.0 + 1e-10);
                let x = rows(&probe, i);
                let y = rows(&probe, (i + 3) % 10);
                let xy = dk.eval(&x, &y).unwrap();
                let yx = dk.eval(&y, &x).unwrap();
                prop_assert!((xy - yx).abs() <= 1e-10);
            }
            let d = dk.diag(&probe).unwrap();
            prop_assert!((d - g.diagonal()).amax() < 1e-12);
        }

        #[test]
        fn solve_times_laplacian_is_symmetric_psd(seed in any::<u64>(), n in 2usize..15, mu in 0.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_points(&mut rng, n);
            let l = random_laplacian(&mut rng, n);
            let k = gram(&KernelSpec::gaussian(1.0).unwrap(), &u).unwrap().into_inner();
            let a = DMatrix::identity(n, n) / mu + &l * &k;
            let m = a.try_inverse().unwrap() * &l;
            let scale = m.amax().max(1.0);
            prop_assert!((&m - m.transpose()).amax() <= 1e-8 * scale);
            let sym = (&m + m.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym).eigenvalues;
            prop_assert!(eig.min() >= -1e-8 * scale);
        }
    }
}
