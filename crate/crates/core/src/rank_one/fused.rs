//! Solver for the wavenumber block, a generalized lasso
//!
//! ```text
//! minimize_γ  ½γᵀQγ − bᵀγ + w_c‖γ‖₁ + Σ_{(a,b)∈E} w_ab |γ_a − γ_b|
//! ```
//!
//! by ADMM on `Dγ = z`, where `D` stacks the identity over the edge
//! incidence rows. `DᵀD = I + L` with `L` the unweighted graph Laplacian,
//! so the γ-update system stays well conditioned whatever the penalty
//! weights. After ADMM stops, the sparsity pattern of `z` (zero
//! coordinates, fused edges) is used to solve the restricted smooth problem
//! exactly; the polished point is kept when it is sign-consistent and no
//! worse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Edges of the fused penalty, built from a Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedGraph {
    pub size: usize,
    /// `(a, b, Γ_ab)` with `a < b`.
    pub edges: Vec<(usize, usize, f64)>,
}

pub const DEFAULT_PRUNE_REL: f64 = 1e-3;

impl FusedGraph {
    /// Keeps pairs whose Gram entry is at least `prune_rel` times the largest
    /// entry; `prune_rel = 0` keeps every pair.
    pub fn from_gram(gram: &DMatrix<f64>, prune_rel: f64) -> Self {
        let size = gram.nrows();
        let max = gram.iter().cloned().fold(0.0, f64::max);
        let cut = prune_rel * max;
        let mut edges = Vec::new();
        for a in 0..size {
            for b in a + 1..size {
                let g = 0.5 * (gram[(a, b)] + gram[(b, a)]);
                if g > 0.0 && g >= cut {
                    edges.push((a, b, g));
                }
            }
        }
        FusedGraph { size, edges }
    }

    /// `Σ_{a<b} Γ_ab |γ_a − γ_b|` over the kept edges.
    pub fn penalty(&self, gamma: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, g)| g * (gamma[a] - gamma[b]).abs())
            .sum()
    }
}

const CERTIFY_EVERY: usize = 100;
const CERTIFY_SWEEPS: usize = 200;
const POLISH_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Rebalance ρ when one residual exceeds the other by this factor.
    pub balance_ratio: f64,
    pub polish: bool,
    /// Over-relaxation factor in `[1, 2)`.
    pub relaxation: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            abs_tol: 1e-7,
            rel_tol: 1e-5,
            max_iter: 20_000,
            balance_ratio: 10.0,
            polish: true,
            relaxation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSolution {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    pub dual: AdmmDual,
}

/// Multipliers and step size carried between related solves.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmDual {
    pub y: Vec<f64>,
    /// ρ relative to `tr(Q) / N`.
    pub rho_scale: f64,
}

#[derive(Debug, Clone)]
pub struct FusedLassoProblem {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub coord_weight: f64,
    /// `(a, b, w_ab)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl FusedLassoProblem {
    pub fn from_design(
        design: &DMatrix<f64>,
        y: &[f64],
        coord_weight: f64,
        edges: Vec<(usize, usize, f64)>,
    ) -> Self {
        let n = design.nrows().max(1) as f64;
        let yv = DVector::from_column_slice(y);
        FusedLassoProblem {
            q: design.transpose() * design / n,
            b: design.transpose() * yv / n,
            coord_weight,
            edges,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let fused: f64 = self
            .edges
            .iter()
            .map(|&(a, b, w)| w * (x[a] - x[b]).abs())
            .sum();
        0.5 * x.dot(&(&self.q * x)) - self.b.dot(x) + self.coord_weight * x.abs().sum() + fused
    }

    fn rows(&self) -> usize {
        self.dim() + self.edges.len()
    }

    fn apply_d(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.dim();
        out.rows_mut(0, n).copy_from(x);
        for (r, &(a, b, _)) in self.edges.iter().enumerate() {
            out[n + r] = x[a] - x[b];
        }
    }

    fn apply_dt(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = v.rows(0, n).into_owned();
        for (r, &(a, b, _)) in self.edges.iter().enumerate() {
            out[a] += v[n + r];
            out[b] -= v[n + r];
        }
        out
    }

    fn row_weight(&self, r: usize) -> f64 {
        let n = self.dim();
        if r < n {
            self.coord_weight
        } else {
            self.edges[r - n].2
        }
    }

    /// `I + L`.
    fn dtd(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::identity(n, n);
        for &(a, b, _) in &self.edges {
            m[(a, a)] += 1.0;
            m[(b, b)] += 1.0;
            m[(a, b)] -= 1.0;
            m[(b, a)] -= 1.0;
        }
        m
    }

    pub fn solve(&self, warm: &[f64], cfg: &AdmmConfig) -> GammaSolution {
        self.solve_warm(warm, None, cfg)
    }

    pub fn solve_warm(&self, warm: &[f64], dual: Option<&AdmmDual>, cfg: &AdmmConfig) -> GammaSolution {
        let n = self.dim();
        let m = self.rows();
        let dtd = self.dtd();
        let rho_base = (self.q.trace() / n as f64).max(1e-8);
        let dual = dual.filter(|d| d.y.len() == m && d.rho_scale > 0.0 && d.rho_scale.is_finite());
        let mut rho = rho_base * dual.map_or(1.0, |d| d.rho_scale);
        let factor = |rho: f64| {
            (&self.q + &dtd * rho)
                .cholesky()
                .expect("Q + ρ(I + L) is positive definite")
        };
        let mut chol = factor(rho);

        let mut x = DVector::from_column_slice(warm);
        let mut dx = DVector::zeros(m);
        self.apply_d(&x, &mut dx);
        let mut z = dx.clone();
        let mut u = match dual {
            Some(d) => DVector::from_column_slice(&d.y) / rho,
            None => DVector::<f64>::zeros(m),
        };
        let relax = cfg.relaxation;
        let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
        let mut converged = false;
        let mut polished = false;
        let mut iterations = 0;

        while iterations < cfg.max_iter {
            iterations += 1;
            let rhs = &self.b + self.apply_dt(&(&z - &u)) * rho;
            x = chol.solve(&rhs);
            self.apply_d(&x, &mut dx);
            let z_old = z.clone();
            let dx_hat = &dx * relax + &z_old * (1.0 - relax);
            for r in 0..m {
                let v = dx_hat[r] + u[r];
                let t = self.row_weight(r) / rho;
                z[r] = if v > t {
                    v - t
                } else if v < -t {
                    v + t
                } else {
                    0.0
                };
            }
            u += &dx_hat - &z;

            r_norm = (&dx - &z).norm();
            s_norm = rho * self.apply_dt(&(&z - &z_old)).norm();
            let eps_pri = (m as f64).sqrt() * cfg.abs_tol + cfg.rel_tol * dx.norm().max(z.norm());
            let grad_scale = (&self.q * &x).norm().max(self.b.norm()).max(rho * self.apply_dt(&u).norm());
            let eps_dual = (n as f64).sqrt() * cfg.abs_tol + cfg.rel_tol * grad_scale;
            if r_norm <= eps_pri && s_norm <= eps_dual {
                converged = true;
                break;
            }
            if cfg.polish && iterations % CERTIFY_EVERY == 0 {
                if let Some(cand) = self.polish(&z) {
                    if self.certify(&cand, &(&u * rho), cfg.abs_tol) {
                        x = cand;
                        converged = true;
                        polished = true;
                        break;
                    }
                }
            }
            if r_norm > cfg.balance_ratio * s_norm {
                rho *= 2.0;
                u /= 2.0;
                chol = factor(rho);
            } else if s_norm > cfg.balance_ratio * r_norm {
                rho /= 2.0;
                u *= 2.0;
                chol = factor(rho);
            }
        }

        if !polished && cfg.polish {
            if let Some(cand) = self.polish(&z) {
                let base = self.objective(&x);
                if self.objective(&cand) <= base + 1e-14 * base.abs().max(1.0) {
                    x = cand;
                    polished = true;
                }
            }
        }

        let start = DVector::from_column_slice(warm);
        if self.objective(&start) < self.objective(&x) {
            x = start;
        }

        GammaSolution {
            x: x.as_slice().to_vec(),
            converged,
            iterations,
            primal_residual: r_norm,
            dual_residual: s_norm,
            polished,
            dual: AdmmDual {
                y: (u * rho).as_slice().to_vec(),
                rho_scale: rho / rho_base,
            },
        }
    }

    /// True if some subgradient certifies `x` as optimal to within
    /// `tol · max(1, ‖b‖∞, ‖Qx‖∞)`, searching multipliers for the rows
    /// where `Dx` vanishes from `y0`.
    fn certify(&self, x: &DVector<f64>, y0: &DVector<f64>, tol: f64) -> bool {
        let n = self.dim();
        let m = self.rows();
        let mut dx = DVector::zeros(m);
        self.apply_d(x, &mut dx);
        let qx = &self.q * x;
        let tol = tol * self.b.amax().max(qx.amax()).max(1.0);
        let mut fixed = DVector::<f64>::zeros(m);
        let mut free = Vec::new();
        for r in 0..m {
            let w = self.row_weight(r);
            if w == 0.0 {
                continue;
            }
            if dx[r] != 0.0 {
                fixed[r] = w * dx[r].signum();
            } else {
                free.push(r);
            }
        }
        // residual of D_Fᵀ v = b − Qx − D_Sᵀ v_S
        let mut res = &self.b - qx - self.apply_dt(&fixed);
        let mut v: Vec<f64> = free
            .iter()
            .map(|&r| y0[r].clamp(-self.row_weight(r), self.row_weight(r)))
            .collect();
        for (k, &r) in free.iter().enumerate() {
            if r < n {
                res[r] -= v[k];
            } else {
                let (a, b, _) = self.edges[r - n];
                res[a] -= v[k];
                res[b] += v[k];
            }
        }
        for _ in 0..CERTIFY_SWEEPS {
            if res.amax() <= tol {
                return true;
            }
            if free.is_empty() {
                return false;
            }
            for (k, &r) in free.iter().enumerate() {
                let w = self.row_weight(r);
                if r < n {
                    let new = (v[k] + res[r]).clamp(-w, w);
                    res[r] -= new - v[k];
                    v[k] = new;
                } else {
                    let (a, b, _) = self.edges[r - n];
                    let new = (v[k] + 0.5 * (res[a] - res[b])).clamp(-w, w);
                    res[a] -= new - v[k];
                    res[b] += new - v[k];
                    v[k] = new;
                }
            }
        }
        res.amax() <= tol
    }

    /// Exact minimizer on the face selected by the zero pattern of `z`,
    /// moving rows whose sign flips onto the face until none do.
    fn polish(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let mut pattern = z.clone();
        let mut dx = DVector::zeros(self.rows());
        for _ in 0..POLISH_ROUNDS {
            let x = self.face_solve(&pattern)?;
            self.apply_d(&x, &mut dx);
            let scale = x.amax().max(1e-300);
            let mut changed = false;
            for r in 0..pattern.len() {
                if self.row_weight(r) > 0.0 && pattern[r] != 0.0 && pattern[r].signum() * dx[r] < -1e-12 * scale {
                    pattern[r] = 0.0;
                    changed = true;
                }
            }
            if !changed {
                return Some(x);
            }
        }
        None
    }

    /// Minimizer with the sign of every row of `Dx` fixed by `pattern`
    /// (zero rows held at zero).
    fn face_solve(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.dim();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for (r, &(a, b, _)) in self.edges.iter().enumerate() {
            if z[n + r] == 0.0 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let roots: Vec<usize> = (0..n).map(|a| find(&mut parent, a)).collect();
        let mut zero_root = vec![false; n];
        if self.coord_weight > 0.0 {
            for l in 0..n {
                if z[l] == 0.0 {
                    zero_root[roots[l]] = true;
                }
            }
        }
        let mut group_of = vec![usize::MAX; n];
        let mut groups = 0;
        for l in 0..n {
            let root = roots[l];
            if zero_root[root] {
                continue;
            }
            if group_of[root] == usize::MAX {
                group_of[root] = groups;
                groups += 1;
            }
            group_of[l] = group_of[root];
        }

        // Linear term contributed by rows whose sign is fixed.
        let mut h = DVector::<f64>::zeros(n);
        if self.coord_weight > 0.0 {
            for l in 0..n {
                if z[l] != 0.0 {
                    h[l] += self.coord_weight * z[l].signum();
                }
            }
        }
        for (r, &(a, b, w)) in self.edges.iter().enumerate() {
            let s = z[n + r];
            if s != 0.0 {
                h[a] += w * s.signum();
                h[b] -= w * s.signum();
            }
        }

        let mut x = DVector::<f64>::zeros(n);
        if groups > 0 {
            let mut qr = DMatrix::<f64>::zeros(groups, groups);
            let mut rhs = DVector::<f64>::zeros(groups);
            for a in 0..n {
                let ga = group_of[a];
                if ga == usize::MAX {
                    continue;
                }
                rhs[ga] += self.b[a] - h[a];
                for c in 0..n {
                    let gc = group_of[c];
                    if gc != usize::MAX {
                        qr[(ga, gc)] += self.q[(a, c)];
                    }
                }
            }
            let theta = match qr.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    let svd = qr.clone().svd(true, true);
                    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
                    let th = svd.solve(&rhs, tol).ok()?;
                    let res = (&qr * &th - &rhs).amax();
                    if res > 1e-10 * rhs.amax().max(1.0) {
                        return None;
                    }
                    th
                }
            };
            for l in 0..n {
                if group_of[l] != usize::MAX {
                    x[l] = theta[group_of[l]];
                }
            }
        }

        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pruning_threshold() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0005, 0.5, 1.0, 0.2, 0.0005, 0.2, 1.0]);
        let pruned = FusedGraph::from_gram(&g, 1e-3);
        assert_eq!(pruned.edges.len(), 2);
        let full = FusedGraph::from_gram(&g, 0.0);
        assert_eq!(full.edges.len(), 3);
        assert!((full.penalty(&[1.0, 0.0, 2.0]) - (0.5 + 0.0005 + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn huge_l1_gives_zero() {
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let p = FusedLassoProblem::from_design(&design, &[3.0, -2.0, 1.0], 1e6, vec![]);
        let s = p.solve(&[0.0, 0.0], &AdmmConfig::default());
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn unpenalized_least_squares() {
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = [3.0, -2.0, 1.0];
        let p = FusedLassoProblem::from_design(&design, &y, 0.0, vec![]);
        let s = p.solve(&[0.0, 0.0], &AdmmConfig::default());
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        assert!((s.x[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn strong_fusion_makes_coefficients_equal() {
        let design = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.2, 0.1, 0.3, 1.0, 0.4, 0.2, 0.1, 1.0, 0.5, 0.5, 0.5,
        ]);
        let y = [1.0, 2.0, 3.0, 1.5];
        let edges = vec![(0, 1, 1e3), (0, 2, 1e3), (1, 2, 1e3)];
        let p = FusedLassoProblem::from_design(&design, &y, 0.0, edges);
        let s = p.solve(&[0.0; 3], &AdmmConfig::default());
        assert!(s.polished);
        assert_eq!(s.x[0], s.x[1]);
        assert_eq!(s.x[1], s.x[2]);
        // Common value is the 1-D least-squares fit on the row sums.
        let sums = [1.3, 1.7, 1.3, 1.5];
        let c = sums.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
            / sums.iter().map(|a| a * a).sum::<f64>();
        assert!((s.x[0] - c).abs() < 1e-10);
    }
}
