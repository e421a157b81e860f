//! Solver for the source and detector blocks:
//!
//! ```text
//! minimize_{x ≥ 0}  ½xᵀQx − bᵀx + c‖x‖₂
//! ```
//!
//! Accelerated projected proximal gradient with adaptive restart. The
//! proximal map of `c‖·‖₂ + ι_{x≥0}` is clamp-then-shrink. Once the support
//! settles, a damped Newton step on the support finishes the solve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    /// Tolerance on the ∞-norm of the gradient mapping, relative to
    /// `max(1, ‖b‖_∞)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            tol: 1e-11,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the gradient mapping at `x`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct NonnegGroupProblem {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl NonnegGroupProblem {
    /// `(1/2n)‖y − Mx‖² + c‖x‖₂` up to the constant `‖y‖²/2n`.
    pub fn from_design(design: &DMatrix<f64>, y: &[f64], c: f64) -> Self {
        let n = design.nrows().max(1) as f64;
        let yv = DVector::from_column_slice(y);
        NonnegGroupProblem {
            q: design.transpose() * design / n,
            b: design.transpose() * yv / n,
            c,
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) - self.b.dot(x) + self.c * x.norm()
    }

    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        let plus = v.map(|e| e.max(0.0));
        let nrm = plus.norm();
        let thresh = step * self.c;
        if nrm <= thresh {
            DVector::zeros(v.len())
        } else {
            plus * (1.0 - thresh / nrm)
        }
    }

    fn mapping_residual(&self, x: &DVector<f64>, lip: f64) -> f64 {
        let g = &self.q * x - &self.b;
        let next = self.prox(&(x - &g / lip), 1.0 / lip);
        (x - next).amax() * lip
    }

    pub fn solve(&self, warm: &[f64], cfg: &GroupConfig) -> BlockSolution {
        let dim = self.b.len();
        let lip = SymmetricEigen::new(self.q.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        if !(lip > 0.0) {
            // Flat data term: the penalty alone is minimized at zero.
            return BlockSolution {
                x: vec![0.0; dim],
                converged: true,
                iterations: 0,
                residual: 0.0,
            };
        }
        let tol = cfg.tol * self.b.amax().max(1.0);

        let mut x = DVector::from_iterator(dim, warm.iter().map(|v| v.max(0.0)));
        let mut fx = self.objective(&x);
        let mut yv = x.clone();
        let mut t = 1.0f64;
        let mut residual = self.mapping_residual(&x, lip);
        let mut iterations = 0;

        while residual > tol && iterations < cfg.max_iter {
            iterations += 1;
            let g = &self.q * &yv - &self.b;
            let xn = self.prox(&(&yv - &g / lip), 1.0 / lip);
            let fxn = self.objective(&xn);
            if fxn > fx {
                yv = x.clone();
                t = 1.0;
                continue;
            }
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            yv = &xn + (&xn - &x) * ((t - 1.0) / tn);
            x = xn;
            fx = fxn;
            t = tn;

            if iterations % 25 == 0 {
                if let Some(polished) = self.newton_on_support(&x) {
                    let fp = self.objective(&polished);
                    if fp <= fx {
                        x = polished;
                        fx = fp;
                        yv = x.clone();
                        t = 1.0;
                    }
                }
            }
            residual = self.mapping_residual(&x, lip);
        }

        BlockSolution {
            x: x.as_slice().to_vec(),
            converged: residual <= tol,
            iterations,
            residual,
        }
    }

    /// Minimizes the smooth restriction of the objective to the support of
    /// `x` by damped Newton, staying strictly inside the positive orthant.
    fn newton_on_support(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
        if support.is_empty() {
            return None;
        }
        let m = support.len();
        let qs = DMatrix::from_fn(m, m, |a, b| self.q[(support[a], support[b])]);
        let bs = DVector::from_fn(m, |a, _| self.b[support[a]]);
        let phi = |z: &DVector<f64>| 0.5 * z.dot(&(&qs * z)) - bs.dot(z) + self.c * z.norm();
        let mut z = DVector::from_fn(m, |a, _| x[support[a]]);
        let scale = bs.amax().max(1.0);

        for _ in 0..40 {
            let nz = z.norm();
            let grad = &qs * &z - &bs + &z * (self.c / nz);
            if grad.amax() <= 1e-15 * scale {
                break;
            }
            let mut hess = qs.clone();
            if self.c > 0.0 {
                let u = &z / nz;
                hess += (DMatrix::identity(m, m) - &u * u.transpose()) * (self.c / nz);
            }
            let ridge = 1e-14 * hess.trace().abs().max(f64::MIN_POSITIVE);
            let chol = hess
                .clone()
                .cholesky()
                .or_else(|| (hess + DMatrix::identity(m, m) * ridge).cholesky())?;
            let dir = -chol.solve(&grad);
            let f0 = phi(&z);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &z + &dir * step;
                if cand.iter().all(|v| *v > 0.0) && phi(&cand) <= f0 {
                    z = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let mut out = DVector::zeros(x.len());
        for (a, &i) in support.iter().enumerate() {
            out[i] = z[a];
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_penalty_gives_zero() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.7, 0.3]);
        let p = NonnegGroupProblem::from_design(&m, &[1.0, 2.0, 0.5], 100.0);
        let s = p.solve(&[1.0, 1.0], &GroupConfig::default());
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert!(s.converged);
    }

    #[test]
    fn scalar_nonnegative_least_squares_closed_form() {
        let col = [0.5, 1.0, 2.0, 0.3];
        let y = [1.0, -0.2, 3.0, 0.4];
        let m = DMatrix::from_column_slice(4, 1, &col);
        let p = NonnegGroupProblem::from_design(&m, &y, 0.0);
        let s = p.solve(&[1.0], &GroupConfig::default());
        let sxy: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = col.iter().map(|a| a * a).sum();
        assert!((s.x[0] - (sxy / sxx).max(0.0)).abs() < 1e-12);

        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let p = NonnegGroupProblem::from_design(&m, &neg, 0.0);
        assert_eq!(p.solve(&[1.0], &GroupConfig::default()).x, vec![0.0]);
    }

    #[test]
    fn zero_design_returns_zero() {
        let m = DMatrix::zeros(4, 3);
        let p = NonnegGroupProblem::from_design(&m, &[1.0, 2.0, 3.0, 4.0], 0.1);
        let s = p.solve(&[0.3, 0.3, 0.3], &GroupConfig::default());
        assert_eq!(s.x, vec![0.0; 3]);
    }
}
