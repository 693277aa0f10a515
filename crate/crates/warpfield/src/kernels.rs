//! Gaussian kernels with a full bandwidth matrix, Gram machinery on point
//! clouds, and the warped kernel
//!
//! ```text
//!   k̃(x, s | H) = k(x, s | H) − k_xᵀ (I + λLK)⁻¹ λL k_s
//! ```
//!
//! where K is the kernel Gram matrix of the point cloud, L its graph
//! Laplacian, and λ ≥ 0 the degree of deformation. The warp operator
//! W = (I + λLK)⁻¹λL is obtained by a linear solve (never an explicit
//! inverse) and shared across every evaluation against the same cloud.
//! At λ = 0 the warped kernel reduces to the plain Gaussian; as λ grows the
//! kernel flattens toward a constant over each connected piece of the cloud.

use std::sync::OnceLock;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{Laplacian, PointCloud};
use crate::linalg::{condition_estimate, lu_factor, norm_1, LuFactors};
use crate::Point;

/// Condition-number gate for the warp solve.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Half-exponent beyond which batched kernel accumulation drops a term;
/// exp(−46) ≈ 1e−20, far below every tolerance in the test suite.
pub(crate) const EXP_ARG_CUTOFF: f64 = 46.0;

/// A 2×2 symmetric positive-definite bandwidth matrix (km²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    h: [f64; 3],   // h11, h12, h22
    inv: [f64; 3], // inverse, same layout
    det: f64,
    peak: f64, // kernel value at zero displacement
}

impl Bandwidth {
    pub fn new(h11: f64, h12: f64, h22: f64) -> Result<Self> {
        if ![h11, h12, h22].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("bandwidth entries must be finite".into()));
        }
        let det = h11 * h22 - h12 * h12;
        // 2x2 symmetric PD iff positive leading minors.
        if !(h11 > 0.0) || !(det > 0.0) {
            return Err(Error::Validation(format!(
                "bandwidth matrix [[{h11}, {h12}], [{h12}, {h22}]] is not positive definite"
            )));
        }
        let inv = [h22 / det, -h12 / det, h11 / det];
        let peak = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
        Ok(Bandwidth {
            h: [h11, h12, h22],
            inv,
            det,
            peak,
        })
    }

    pub fn identity() -> Self {
        Bandwidth::new(1.0, 0.0, 1.0).expect("identity is PD")
    }

    /// H scaled by a positive factor.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Validation(format!(
                "bandwidth scale must be positive, got {alpha}"
            )));
        }
        Bandwidth::new(self.h[0] * alpha, self.h[1] * alpha, self.h[2] * alpha)
    }

    pub fn entries(&self) -> (f64, f64, f64) {
        (self.h[0], self.h[1], self.h[2])
    }

    pub fn inv_entries(&self) -> (f64, f64, f64) {
        (self.inv[0], self.inv[1], self.inv[2])
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// Kernel value at zero displacement, 1/(2π√det H).
    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Square root of the largest eigenvalue of H: the widest 1-σ extent.
    pub fn max_std(&self) -> f64 {
        let mean = (self.h[0] + self.h[2]) / 2.0;
        let d = ((self.h[0] - self.h[2]) / 2.0).hypot(self.h[1]);
        (mean + d).sqrt()
    }

    /// Mahalanobis quadratic form (a−b)ᵀ H⁻¹ (a−b).
    pub fn quad_form(&self, a: Point, b: Point) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        self.inv[0] * dx * dx + 2.0 * self.inv[1] * dx * dy + self.inv[2] * dy * dy
    }

    /// Gaussian kernel value.
    pub fn eval(&self, a: Point, b: Point) -> f64 {
        self.peak * (-0.5 * self.quad_form(a, b)).exp()
    }

    /// Kernel value with far-field truncation to zero; for batched
    /// accumulation where sub-1e−20 relative contributions are dropped.
    pub(crate) fn eval_truncated(&self, a: Point, b: Point) -> f64 {
        let q = self.quad_form(a, b);
        if q > 2.0 * EXP_ARG_CUTOFF {
            0.0
        } else {
            self.peak * (-0.5 * q).exp()
        }
    }
}

/// Bivariate Gaussian kernel with bandwidth matrix H:
/// (2π)⁻¹ det(H)^(−1/2) exp(−½ (x−s)ᵀH⁻¹(x−s)). Strictly positive.
pub fn gaussian_eval(x: Point, s: Point, h: &Bandwidth) -> f64 {
    h.eval(x, s)
}

/// Everything needed to evaluate warped kernels against one point cloud:
/// the cloud, its Laplacian, the Gram matrix K, and the factored warp system.
/// Immutable after construction and safe to share across threads.
#[derive(Debug)]
pub struct LaplacianContext {
    cloud: Vec<Point>,
    laplacian: Laplacian,
    bandwidth: Bandwidth,
    lambda: f64,
    gram: Array2<f64>,
    lu: Option<LuFactors>,
    condition: f64,
    warp: OnceLock<Array2<f64>>,
}

/// Assemble K and factor (I + λLK). The warp operator itself is
/// materialized on first use; density paths only ever apply it to vectors.
pub fn build_context(
    cloud: &PointCloud,
    laplacian: &Laplacian,
    bandwidth: Bandwidth,
    lambda: f64,
) -> Result<LaplacianContext> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!(
            "deformation must be finite and >= 0, got {lambda}"
        )));
    }
    let z = cloud.len();
    if laplacian.n() != z {
        return Err(Error::Validation(format!(
            "cloud size {z} does not match Laplacian size {}",
            laplacian.n()
        )));
    }
    let pts = cloud.points();
    let mut gram = Array2::<f64>::zeros((z, z));
    for i in 0..z {
        gram[(i, i)] = bandwidth.peak();
        for j in (i + 1)..z {
            let v = bandwidth.eval(pts[i], pts[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }

    let (lu, condition) = if lambda == 0.0 {
        (None, 1.0)
    } else {
        let mut b = laplacian.mul_dense(&gram);
        b.mapv_inplace(|v| v * lambda);
        for i in 0..z {
            b[(i, i)] += 1.0;
        }
        let b_norm = norm_1(&b);
        let lu = lu_factor(b).map_err(|e| Error::Numerical(format!("warp solve failed: {e}")))?;
        let condition = condition_estimate(b_norm, &lu);
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                message: "warp system (I + λLK) is too ill-conditioned".into(),
                condition,
            });
        }
        (Some(lu), condition)
    };

    Ok(LaplacianContext {
        cloud: pts.to_vec(),
        laplacian: laplacian.clone(),
        bandwidth,
        lambda,
        gram,
        lu,
        condition,
        warp: OnceLock::new(),
    })
}

impl LaplacianContext {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn cloud(&self) -> &[Point] {
        &self.cloud
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        &self.bandwidth
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Gram matrix K of the cloud under the context bandwidth.
    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    /// Condition estimate of the factored warp system (1 when λ = 0).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// The warp operator W = (I + λLK)⁻¹λL, symmetrized as (W + Wᵀ)/2.
    /// Computed once per context on first use.
    pub fn warp_operator(&self) -> &Array2<f64> {
        self.warp.get_or_init(|| {
            let z = self.len();
            match &self.lu {
                None => Array2::zeros((z, z)),
                Some(lu) => {
                    let mut rhs = self.laplacian.to_dense();
                    rhs.mapv_inplace(|v| v * self.lambda);
                    let w = lu.solve_matrix(&rhs);
                    let wt = w.t().to_owned();
                    (&w + &wt) * 0.5
                }
            }
        })
    }

    /// W·v without materializing W: solve (I + λLK)·y = λL·v.
    pub fn warp_apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.lu {
            None => vec![0.0; self.len()],
            Some(lu) => {
                let mut y = self.laplacian.mul_vec(v);
                for t in y.iter_mut() {
                    *t *= self.lambda;
                }
                lu.solve_in_place(&mut y);
                y
            }
        }
    }

    /// Kernel vector of a point against the cloud.
    pub fn kernel_vector(&self, x: Point) -> Vec<f64> {
        self.cloud.iter().map(|&z| self.bandwidth.eval(x, z)).collect()
    }

    /// The warped kernel k̃(x, s) = k(x, s) − k_xᵀ W k_s. May be negative.
    pub fn warped_eval(&self, x: Point, s: Point) -> f64 {
        let base = self.bandwidth.eval(x, s);
        if self.lu.is_none() {
            return base;
        }
        let kx = self.kernel_vector(x);
        let ks = self.kernel_vector(s);
        let w = self.warp_operator();
        let wks = mat_vec(w, &ks);
        base - dot(&kx, &wks)
    }

    /// Warped Gram matrix G_ij = k̃(p_i, p_j); symmetric by construction.
    pub fn warped_gram(&self, points: &[Point]) -> Result<Array2<f64>> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("warped_gram points must be finite".into()));
        }
        let m = points.len();
        let mut g = Array2::<f64>::zeros((m, m));
        if self.lu.is_none() {
            for i in 0..m {
                for j in i..m {
                    let v = self.bandwidth.eval(points[i], points[j]);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            return Ok(g);
        }
        let kvecs: Vec<Vec<f64>> = points.iter().map(|&p| self.kernel_vector(p)).collect();
        let w = self.warp_operator();
        let wkvecs: Vec<Vec<f64>> = kvecs.iter().map(|k| mat_vec(w, k)).collect();
        for i in 0..m {
            for j in i..m {
                let v = self.bandwidth.eval(points[i], points[j]) - dot(&kvecs[i], &wkvecs[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Mean kernel vector of a set of source points against the cloud,
    /// (1/n)Σ_s k_s. Far-field terms below the truncation cutoff are dropped.
    pub fn mean_kernel_vector(&self, sources: &[Point]) -> Vec<f64> {
        let n = sources.len().max(1) as f64;
        let mut m = vec![0.0; self.len()];
        for s in sources {
            for (mi, &z) in m.iter_mut().zip(self.cloud.iter()) {
                *mi += self.bandwidth.eval_truncated(*s, z);
            }
        }
        for mi in m.iter_mut() {
            *mi /= n;
        }
        m
    }
}

fn mat_vec(a: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let cols = a.ncols();
    let s = a.as_slice().expect("standard layout");
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = &s[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (r, x) in row.iter().zip(v.iter()) {
            acc += r * x;
        }
        out[i] = acc;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
