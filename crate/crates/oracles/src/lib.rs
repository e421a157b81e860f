//! Slow reference solvers and optimality checkers used only by tests.
//!
//! Nothing here depends on the main crate. Each oracle solves its problem
//! by a different method than the production solver: support enumeration,
//! a scalar secular equation, or a dual coordinate method.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn sub_matrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn sub_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |a, _| v[idx[a]])
}

/// `½‖X − Kx‖² + λ_H xᵀKx + λ₁ Σx`.
pub fn sparse_rep_objective(k: &DMatrix<f64>, data: &[f64], lambda_h: f64, lambda_1: f64, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    let kx = k * &xv;
    let r = DVector::from_column_slice(data) - &kx;
    0.5 * r.norm_squared() + lambda_h * xv.dot(&kx) + lambda_1 * xv.sum()
}

/// Exact minimizer of the sparse representation problem over `x ≥ 0` by
/// trying every support. Only for small dimensions.
pub fn sparse_rep_exhaustive(k: &DMatrix<f64>, data: &[f64], lambda_h: f64, lambda_1: f64) -> Vec<f64> {
    let n = k.nrows();
    assert!(n <= 16, "exhaustive search is limited to 16 coefficients");
    let h = k.transpose() * k + k * (2.0 * lambda_h);
    let c = k.transpose() * DVector::from_column_slice(data);
    let mut best = vec![0.0; n];
    let mut best_obj = sparse_rep_objective(k, data, lambda_h, lambda_1, &best);
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|l| mask & (1 << l) != 0).collect();
        let hs = sub_matrix(&h, &support);
        let rhs = sub_vector(&c, &support).add_scalar(-lambda_1);
        let Some(sol) = hs.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !(*v > 0.0)) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (a, &l) in support.iter().enumerate() {
            x[l] = sol[a];
        }
        let obj = sparse_rep_objective(k, data, lambda_h, lambda_1, &x);
        if obj < best_obj {
            best_obj = obj;
            best = x;
        }
    }
    best
}

/// Largest violation of the first-order conditions of the sparse
/// representation problem at `x`, in gradient units.
pub fn sparse_rep_kkt(k: &DMatrix<f64>, data: &[f64], lambda_h: f64, lambda_1: f64, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    let kx = k * &xv;
    let g = k.transpose() * (&kx - DVector::from_column_slice(data)) + kx * (2.0 * lambda_h);
    let mut worst = 0.0f64;
    for l in 0..x.len() {
        let gl = g[l] + lambda_1;
        let v = if x[l] < 0.0 {
            -x[l] * (1.0 + gl.abs())
        } else if x[l] > 0.0 {
            gl.abs()
        } else {
            (-gl).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `½ xᵀQx − bᵀx + c‖x‖₂`.
pub fn group_objective(q: &DMatrix<f64>, b: &DVector<f64>, c: f64, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(q * x)) - b.dot(x) + c * x.norm()
}

/// Minimizer of `½ xᵀQx − bᵀx + c‖x‖₂` over `x ≥ 0`.
///
/// For each candidate support `S` the positive part satisfies
/// `(Q_S + (c/t) I) x_S = b_S` with `t = ‖x_S‖`; `t` is the unique root of
/// the decreasing function `t ↦ ‖(tQ_S + cI)⁻¹ b_S‖ − 1`, found by
/// bisection in the eigenbasis of `Q_S`.
pub fn group_nonneg_oracle(q: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> DVector<f64> {
    let n = b.len();
    assert!(n <= 14, "support enumeration is limited to 14 coordinates");
    let mut best = DVector::zeros(n);
    let mut best_obj = 0.0;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|l| mask & (1 << l) != 0).collect();
        let qs = sub_matrix(q, &support);
        let bs = sub_vector(b, &support);
        let xs = if c == 0.0 {
            match qs.clone().lu().solve(&bs) {
                Some(s) => s,
                None => continue,
            }
        } else {
            let eig = SymmetricEigen::new(qs.clone());
            let proj = eig.eigenvectors.transpose() * &bs;
            let ratio = |t: f64| -> f64 {
                proj.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(p, lam)| (p / (t * lam.max(0.0) + c)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            if ratio(0.0) <= 1.0 {
                continue;
            }
            let mut hi = 1.0;
            while ratio(hi) > 1.0 {
                hi *= 2.0;
                if hi > 1e300 {
                    break;
                }
            }
            if ratio(hi) > 1.0 {
                continue;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ratio(mid) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let scaled = DVector::from_fn(proj.len(), |a, _| {
                proj[a] / (t * eig.eigenvalues[a].max(0.0) + c)
            });
            &eig.eigenvectors * scaled * t
        };
        if xs.iter().any(|v| !(*v > 0.0)) {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (a, &l) in support.iter().enumerate() {
            x[l] = xs[a];
        }
        let obj = group_objective(q, b, c, &x);
        if obj < best_obj {
            best_obj = obj;
            best = x;
        }
    }
    best
}

/// First-order violation for the nonnegative group problem.
pub fn group_kkt(q: &DMatrix<f64>, b: &DVector<f64>, c: f64, x: &DVector<f64>) -> f64 {
    let g = q * x - b;
    let neg = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let nrm = x.norm();
    if nrm == 0.0 {
        let pull = g.map(|v| (-v).max(0.0)).norm();
        return (pull - c).max(0.0).max(neg);
    }
    let mut worst = neg;
    for l in 0..x.len() {
        let v = if x[l] > 0.0 {
            (g[l] + c * x[l] / nrm).abs()
        } else {
            (-g[l]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `½ xᵀQx − bᵀx + w Σ|x_l| + Σ_e w_e |x_a − x_b|`.
pub fn fused_objective(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    coord_weight: f64,
    edges: &[(usize, usize, f64)],
    x: &DVector<f64>,
) -> f64 {
    let fused: f64 = edges.iter().map(|&(a, c, w)| w * (x[a] - x[c]).abs()).sum();
    0.5 * x.dot(&(q * x)) - b.dot(x) + coord_weight * x.abs().sum() + fused
}

/// Generalized lasso with positive definite `Q`, solved through its dual:
/// `min_u ½ (b − Dᵀu)ᵀ Q⁻¹ (b − Dᵀu)` over the box `|u_r| ≤ w_r`, by exact
/// coordinate minimization, then `x = Q⁻¹(b − Dᵀu)`.
pub fn fused_dual_oracle(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    coord_weight: f64,
    edges: &[(usize, usize, f64)],
    max_sweeps: usize,
) -> DVector<f64> {
    let n = b.len();
    let qinv = q.clone().try_inverse().expect("oracle requires positive definite Q");
    // rows of D: identity rows, then e_a − e_b per edge
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|l| vec![(l, 1.0)]).collect();
    let mut weights = vec![coord_weight; n];
    for &(a, c, w) in edges {
        rows.push(vec![(a, 1.0), (c, -1.0)]);
        weights.push(w);
    }
    let m = rows.len();
    let mut u = vec![0.0; m];
    // r = Q⁻¹(b − Dᵀu) kept up to date
    let mut x = &qinv * b;
    let diag: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.iter()
                .flat_map(|&(i, a)| r.iter().map(move |&(j, c)| (i, j, a * c)))
                .map(|(i, j, s)| s * qinv[(i, j)])
                .sum()
        })
        .collect();
    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for r in 0..m {
            if weights[r] == 0.0 {
                continue;
            }
            // dual objective derivative in u_r is −(D x)_r
            let dx: f64 = rows[r].iter().map(|&(i, a)| a * x[i]).sum();
            let target = (u[r] + dx / diag[r]).clamp(-weights[r], weights[r]);
            let delta = target - u[r];
            if delta != 0.0 {
                u[r] = target;
                for &(i, a) in &rows[r] {
                    let col = qinv.column(i) * (a * delta);
                    x -= col;
                }
                change = change.max(delta.abs());
            }
        }
        if change <= 1e-15 * (1.0 + weights.iter().cloned().fold(0.0, f64::max)) {
            break;
        }
    }
    x
}

/// First-order violation for the generalized lasso at `x`. Coordinates with
/// `|x_l| ≤ zero_tol` and edges with `|x_a − x_b| ≤ zero_tol` get free
/// subgradients; the rest are fixed by the signs. The free parts are chosen
/// by box-constrained least squares and the remaining residual's ∞-norm is
/// returned.
pub fn fused_kkt(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    coord_weight: f64,
    edges: &[(usize, usize, f64)],
    x: &DVector<f64>,
    zero_tol: f64,
) -> f64 {
    let n = b.len();
    let mut r = q * x - b;
    // free columns: (coefficient vector over coordinates, bound)
    let mut free: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for l in 0..n {
        if x[l].abs() <= zero_tol {
            free.push((vec![(l, 1.0)], coord_weight));
        } else {
            r[l] += coord_weight * x[l].signum();
        }
    }
    for &(a, c, w) in edges {
        let diff = x[a] - x[c];
        if diff.abs() <= zero_tol {
            free.push((vec![(a, 1.0), (c, -1.0)], w));
        } else {
            r[a] += w * diff.signum();
            r[c] -= w * diff.signum();
        }
    }
    let mut z = vec![0.0; free.len()];
    for _ in 0..20_000 {
        let mut change = 0.0f64;
        for (f, (col, bound)) in free.iter().enumerate() {
            let norm2: f64 = col.iter().map(|(_, a)| a * a).sum();
            let dot: f64 = col.iter().map(|&(i, a)| a * r[i]).sum();
            let target = (z[f] - dot / norm2).clamp(-bound, *bound);
            let delta = target - z[f];
            if delta != 0.0 {
                for &(i, a) in col {
                    r[i] += a * delta;
                }
                z[f] = target;
                change = change.max(delta.abs());
            }
        }
        if change <= 1e-16 {
            break;
        }
    }
    r.amax()
}

/// Plain lasso `½ xᵀQx − bᵀx + w‖x‖₁` by cyclic coordinate descent.
pub fn lasso_cd(q: &DMatrix<f64>, b: &DVector<f64>, w: f64, sweeps: usize) -> DVector<f64> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for l in 0..n {
            if q[(l, l)] <= 0.0 {
                continue;
            }
            let rest = (q.row(l) * &x)[0] - q[(l, l)] * x[l];
            let v = b[l] - rest;
            let next = v.signum() * (v.abs() - w).max(0.0) / q[(l, l)];
            change = change.max((next - x[l]).abs());
            x[l] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    x
}

/// `∫ f` on `[lo, hi]` by composite Simpson's rule with `panels` panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (hi - lo) / m as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_sparse_rep() {
        // K = [2]: minimize ½(3 − 2x)² + λ_H·2x² + λ₁ x
        let k = DMatrix::from_element(1, 1, 2.0);
        let x = sparse_rep_exhaustive(&k, &[3.0], 0.5, 1.0);
        // derivative: −2(3 − 2x) + 2x + 1 = 0 → 6x = 5
        assert!((x[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!(sparse_rep_kkt(&k, &[3.0], 0.5, 1.0, &x) < 1e-12);
        assert_eq!(sparse_rep_exhaustive(&k, &[-1.0], 0.1, 0.1), vec![0.0]);
    }

    #[test]
    fn group_oracle_matches_scalar_formula() {
        // one coordinate: ½ q x² − b x + c x → x = (b − c)/q
        let q = DMatrix::from_element(1, 1, 2.0);
        let b = DVector::from_element(1, 3.0);
        let x = group_nonneg_oracle(&q, &b, 1.0);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!(group_kkt(&q, &b, 1.0, &x) < 1e-10);
        assert_eq!(group_nonneg_oracle(&q, &b, 5.0)[0], 0.0);
    }

    #[test]
    fn group_oracle_isotropic_case() {
        // Q = I: x = b₊ (1 − c/‖b₊‖)
        let q = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![3.0, 4.0, -1.0]);
        let x = group_nonneg_oracle(&q, &b, 2.5);
        let expect = [1.5, 2.0, 0.0];
        for l in 0..3 {
            assert!((x[l] - expect[l]).abs() < 1e-10);
        }
        assert!(group_kkt(&q, &b, 2.5, &x) < 1e-10);
    }

    #[test]
    fn fused_oracle_reduces_to_lasso() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let b = DVector::from_vec(vec![1.0, -0.7, 0.05]);
        let x = fused_dual_oracle(&q, &b, 0.2, &[], 100_000);
        let y = lasso_cd(&q, &b, 0.2, 100_000);
        assert!((x - &y).amax() < 1e-10);
        assert!(fused_kkt(&q, &b, 0.2, &[], &y, 1e-12) < 1e-10);
    }

    #[test]
    fn strong_fusion_equalizes() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DVector::from_vec(vec![1.0, 4.0]);
        let x = fused_dual_oracle(&q, &b, 0.0, &[(0, 1, 100.0)], 100_000);
        // common value minimizes ½(1 + 2)v² − 5v
        assert!((x[0] - 5.0 / 3.0).abs() < 1e-10);
        assert!((x[1] - 5.0 / 3.0).abs() < 1e-10);
        assert!(fused_kkt(&q, &b, 0.0, &[(0, 1, 100.0)], &x, 1e-9) < 1e-10);
    }

    #[test]
    fn kkt_detects_wrong_point() {
        let q = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(fused_kkt(&q, &b, 0.1, &[], &DVector::zeros(2), 1e-12) > 0.5);
        assert!(group_kkt(&q, &b, 0.1, &DVector::from_vec(vec![2.0, 0.0])) > 0.5);
    }

    #[test]
    fn simpson_polynomial() {
        assert!((simpson(|t| t * t * t, 0.0, 2.0, 10) - 4.0).abs() < 1e-12);
    }
}
