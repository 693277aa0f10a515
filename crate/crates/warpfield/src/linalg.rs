//! Dense linear algebra helpers: partial-pivot LU with a 1-norm condition
//! estimate, and a Jacobi eigenvalue routine for symmetric matrices.
//!
//! The crate solves its linear systems instead of forming explicit inverses,
//! so the LU factorization is the workhorse. Everything here is plain f64 on
//! row-major `ndarray` storage and fully deterministic.

use ndarray::Array2;

use crate::error::{Error, Result};

/// LU factorization of a square matrix with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Array2<f64>,
    pivots: Vec<usize>,
    n: usize,
}

/// Factorize a square matrix. Fails on exact singularity.
pub fn lu_factor(a: Array2<f64>) -> Result<LuFactors> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Validation(format!(
            "lu_factor requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut lu = a;
    let mut pivots = vec![0usize; n];
    let m = lu
        .as_slice_mut()
        .expect("standard layout");
    for k in 0..n {
        // Pivot: largest magnitude in column k at or below the diagonal.
        let mut p = k;
        let mut best = m[k * n + k].abs();
        for i in (k + 1)..n {
            let v = m[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical(format!(
                "singular matrix in LU factorization at column {k}"
            )));
        }
        pivots[k] = p;
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
        }
        let piv = m[k * n + k];
        for i in (k + 1)..n {
            let l = m[i * n + k] / piv;
            m[i * n + k] = l;
            if l != 0.0 {
                let (row_k, row_i) = {
                    let (head, tail) = m.split_at_mut(i * n);
                    (&head[k * n..k * n + n], &mut tail[..n])
                };
                for j in (k + 1)..n {
                    row_i[j] -= l * row_k[j];
                }
            }
        }
    }
    Ok(LuFactors { lu, pivots, n })
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let m = self.lu.as_slice().expect("standard layout");
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        // Forward: L has unit diagonal.
        for i in 1..n {
            let row = &m[i * n..i * n + i];
            let mut s = 0.0;
            for (j, &l) in row.iter().enumerate() {
                s += l * b[j];
            }
            b[i] -= s;
        }
        // Backward.
        for i in (0..n).rev() {
            let row = &m[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in (i + 1)..n {
                s += row[j] * b[j];
            }
            b[i] = (b[i] - s) / row[i];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve `Aᵀ·x = b` in place (used by the condition estimator).
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let m = self.lu.as_slice().expect("standard layout");
        // A = Pᵀ L U, so Aᵀ x = b means Uᵀ y = b, Lᵀ z = y, x = Pᵀ z.
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..i {
                s += m[j * n + i] * b[j];
            }
            b[i] = (b[i] - s) / m[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = 0.0;
            for j in (i + 1)..n {
                s += m[j * n + i] * b[j];
            }
            b[i] -= s;
        }
        for k in (0..n).rev() {
            b.swap(k, self.pivots[k]);
        }
    }

    /// Solve `A·X = B` column by column, returning X with B's shape.
    pub fn solve_matrix(&self, b: &Array2<f64>) -> Array2<f64> {
        let n = self.n;
        debug_assert_eq!(b.nrows(), n);
        let cols = b.ncols();
        let mut out = Array2::<f64>::zeros((n, cols));
        let mut col = vec![0.0; n];
        for j in 0..cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

/// 1-norm of a matrix (maximum absolute column sum).
pub fn norm_1(a: &Array2<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            s += a[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

/// Estimate the 1-norm condition number of the factored matrix.
///
/// Hager's power-style estimator for ‖A⁻¹‖₁ using a handful of solves with
/// A and Aᵀ; multiplied by the supplied ‖A‖₁. A lower bound in theory, and
/// in practice within a small factor of the true value.
pub fn condition_estimate(a_norm_1: f64, lu: &LuFactors) -> f64 {
    let n = lu.n();
    if n == 0 {
        return 1.0;
    }
    let mut xi = vec![1.0 / n as f64; n];
    let mut gamma = 0.0f64;
    for _ in 0..5 {
        let mut x = xi.clone();
        lu.solve_in_place(&mut x);
        gamma = x.iter().map(|v| v.abs()).sum();
        let sign: Vec<f64> = x.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let mut z = sign;
        lu.solve_transpose_in_place(&mut z);
        let (mut j_best, mut z_best) = (0usize, 0.0f64);
        for (j, v) in z.iter().enumerate() {
            if v.abs() > z_best {
                z_best = v.abs();
                j_best = j;
            }
        }
        let z_dot_xi: f64 = z.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
        if z_best <= z_dot_xi {
            break;
        }
        xi = vec![0.0; n];
        xi[j_best] = 1.0;
    }
    a_norm_1 * gamma
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
///
/// Intended for modest sizes (test oracles and PSD checks); O(n³) per sweep.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigenvalues requires a square matrix");
    let mut m = a.clone();
    let scale = norm_1(a).max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lu_solves_known_system() {
        let a = array![[4.0, 1.0], [2.0, 3.0]];
        let lu = lu_factor(a).unwrap();
        let x = lu.solve_vec(&[9.0, 13.0]);
        assert!((x[0] - 1.4).abs() < 1e-12);
        assert!((x[1] - 3.4).abs() < 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(lu_factor(a).is_err());
    }

    #[test]
    fn lu_matches_residual_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 3, 10, 40] {
            let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0))
                + Array2::<f64>::eye(n) * (n as f64);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lu = lu_factor(a.clone()).unwrap();
            let x = lu.solve_vec(&b);
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += a[(i, j)] * x[j];
                }
                assert!((s - b[i]).abs() < 1e-9, "residual too large at {i}");
            }
            // Transpose solve residual.
            let mut xt = b.clone();
            lu.solve_transpose_in_place(&mut xt);
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += a[(j, i)] * xt[j];
                }
                assert!((s - b[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn condition_estimate_tracks_diagonal_matrices() {
        // diag(1, 1e-6) has 1-norm condition 1e6 exactly.
        let a = array![[1.0, 0.0], [0.0, 1e-6]];
        let norm = norm_1(&a);
        let lu = lu_factor(a).unwrap();
        let cond = condition_estimate(norm, &lu);
        assert!(cond > 1e5 && cond < 1e7, "cond {cond}");
    }

    #[test]
    fn jacobi_eigenvalues_match_known_spectrum() {
        // Path-graph Laplacian on 3 nodes: eigenvalues 0, 1, 3.
        let a = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        let e = sym_eigenvalues(&a);
        assert!((e[0] - 0.0).abs() < 1e-10);
        assert!((e[1] - 1.0).abs() < 1e-10);
        assert!((e[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn jacobi_handles_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 25;
        let mut a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let at = a.t().to_owned();
        a = (&a + &at) * 0.5;
        let e = sym_eigenvalues(&a);
        // Trace and Frobenius norm are eigenvalue invariants.
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let fro2: f64 = a.iter().map(|v| v * v).sum();
        let e_sum: f64 = e.iter().sum();
        let e_sq: f64 = e.iter().map(|v| v * v).sum();
        assert!((trace - e_sum).abs() < 1e-9);
        assert!((fro2 - e_sq).abs() < 1e-8);
    }
}
