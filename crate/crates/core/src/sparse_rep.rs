//! Nonnegative sparse kernel expansion of individual spectra:
//!
//! ```text
//! minimize_{x ≥ 0}  ½‖X − Kx‖² + λ_H xᵀKx + λ₁‖x‖₁
//! ```
//!
//! solved by cyclic projected coordinate descent. After each sweep an
//! active-set step minimizes the quadratic exactly on the current support,
//! so the solver terminates with machine-precision stationarity once the
//! support is identified.

use nalgebra::{DMatrix, DVector};
use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SpectrumTensor, TensorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseRepParams {
    pub lambda_h: f64,
    pub lambda_1: f64,
    /// KKT tolerance relative to `‖X‖_∞`.
    pub tol: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
}

impl Default for SparseRepParams {
    fn default() -> Self {
        SparseRepParams {
            lambda_h: 0.01,
            lambda_1: 0.01,
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

impl SparseRepParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_h >= 0.0) || !(self.lambda_1 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalties must be nonnegative (lambda_h = {}, lambda_1 = {})",
                self.lambda_h, self.lambda_1
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "tolerance and iteration budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One observed spectrum `X_ij^k` on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    pub values: Vec<f64>,
    /// `(k, i, j)`.
    pub index: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRepFit {
    pub coeffs: Vec<f64>,
    pub objective: f64,
    /// `Kx`.
    pub fitted: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Solver bound to one kernel matrix; `H = KᵀK + 2λ_H K` is shared by every
/// spectrum fitted with it.
#[derive(Debug, Clone)]
pub struct SparseRepSolver {
    kmat: DMatrix<f64>,
    hess: DMatrix<f64>,
    params: SparseRepParams,
}

impl SparseRepSolver {
    pub fn new(kmat: &DMatrix<f64>, params: SparseRepParams) -> Result<Self> {
        params.validate()?;
        if !kmat.is_square() {
            return Err(Error::DimensionMismatch("kernel matrix must be square".into()));
        }
        let hess = kmat.transpose() * kmat + kmat * (2.0 * params.lambda_h);
        Ok(SparseRepSolver {
            kmat: kmat.clone(),
            hess,
            params,
        })
    }

    pub fn params(&self) -> &SparseRepParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.kmat.nrows()
    }

    pub fn fit(&self, values: &[f64]) -> Result<SparseRepFit> {
        let n = self.dim();
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "spectrum has {} values but kernel matrix is {n}×{n}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("spectrum value {pos}")));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(SparseRepFit {
                coeffs: vec![0.0; n],
                objective: 0.0,
                fitted: vec![0.0; n],
                kkt_residual: 0.0,
                converged: true,
                sweeps: 0,
            });
        }

        let obs = DVector::from_column_slice(values);
        let corr = self.kmat.transpose() * &obs;
        let lambda_1 = self.params.lambda_1;
        let tol = self.params.tol * scale;
        let h = &self.hess;

        let mut x = DVector::<f64>::zeros(n);
        let mut hx = DVector::<f64>::zeros(n);
        let mut kkt = f64::INFINITY;
        let mut sweeps = 0;
        let mut last_obj = self.quad_objective(&obs, &corr, &x, &hx);
        let mut last_support: Vec<bool> = Vec::new();

        while sweeps < self.params.max_iter {
            sweeps += 1;
            for l in 0..n {
                let hll = h[(l, l)];
                if hll <= 0.0 {
                    continue;
                }
                let grad = hx[l] - corr[l] + lambda_1;
                let next = (x[l] - grad / hll).max(0.0);
                let delta = next - x[l];
                if delta != 0.0 {
                    x[l] = next;
                    hx.axpy(delta, &h.column(l), 1.0);
                }
            }
            // Newton steps only once a sweep leaves the support unchanged
            let support: Vec<bool> = x.iter().map(|v| *v > 0.0).collect();
            if support == last_support {
                self.active_set_step(&corr, &mut x, &mut hx);
            }
            last_support = support;

            let obj = self.quad_objective(&obs, &corr, &x, &hx);
            debug_assert!(
                obj <= last_obj + 1e-9 * last_obj.abs().max(1.0),
                "objective rose from {last_obj} to {obj}"
            );
            last_obj = obj;

            kkt = kkt_violation(&x, &hx, &corr, lambda_1);
            if kkt <= tol {
                break;
            }
        }

        let fitted = &self.kmat * &x;
        let resid = &obs - &fitted;
        let objective =
            0.5 * resid.norm_squared() + self.params.lambda_h * x.dot(&fitted) + lambda_1 * x.sum();
        Ok(SparseRepFit {
            coeffs: x.as_slice().to_vec(),
            objective,
            fitted: fitted.as_slice().to_vec(),
            kkt_residual: kkt,
            converged: kkt <= tol,
            sweeps,
        })
    }

    /// Objective up to evaluation through `Hx`; used for the monotonicity
    /// check only.
    fn quad_objective(
        &self,
        obs: &DVector<f64>,
        corr: &DVector<f64>,
        x: &DVector<f64>,
        hx: &DVector<f64>,
    ) -> f64 {
        0.5 * obs.norm_squared() - corr.dot(x) + 0.5 * x.dot(hx) + self.params.lambda_1 * x.sum()
    }

    /// Moves toward the minimizer of the quadratic restricted to the current
    /// support, stopping at the nonnegativity boundary and dropping blocking
    /// coordinates.
    fn active_set_step(&self, corr: &DVector<f64>, x: &mut DVector<f64>, hx: &mut DVector<f64>) {
        let h = &self.hess;
        for _ in 0..x.len() {
            let support: Vec<usize> = (0..x.len()).filter(|&l| x[l] > 0.0).collect();
            if support.is_empty() {
                return;
            }
            let m = support.len();
            let hs = DMatrix::from_fn(m, m, |a, b| h[(support[a], support[b])]);
            let rhs = DVector::from_fn(m, |a, _| corr[support[a]] - self.params.lambda_1);
            let Some(chol) = hs.cholesky() else {
                return;
            };
            let target = chol.solve(&rhs);

            let mut step = 1.0f64;
            let mut blocking = None;
            for (a, &l) in support.iter().enumerate() {
                if target[a] <= 0.0 {
                    let t = x[l] / (x[l] - target[a]);
                    if t < step {
                        step = t;
                        blocking = Some(a);
                    }
                }
            }
            for (a, &l) in support.iter().enumerate() {
                x[l] += step * (target[a] - x[l]);
                if target[a] <= 0.0 && (Some(a) == blocking || x[l] <= 0.0) {
                    x[l] = 0.0;
                }
            }
            hx.fill(0.0);
            for &l in &support {
                if x[l] != 0.0 {
                    hx.axpy(x[l], &h.column(l), 1.0);
                }
            }
            if blocking.is_none() {
                return;
            }
        }
    }
}

/// Max over coordinates of `max(−g_l, x_l·|g_l|)` with
/// `g = K(Kx − X) + 2λ_H Kx + λ₁`.
fn kkt_violation(x: &DVector<f64>, hx: &DVector<f64>, corr: &DVector<f64>, lambda_1: f64) -> f64 {
    (0..x.len())
        .map(|l| {
            let g = hx[l] - corr[l] + lambda_1;
            (-g).max(x[l] * g.abs())
        })
        .fold(0.0, f64::max)
}

pub fn fit_sparse_rep(
    sample: &SpectrumSample,
    kmat: &DMatrix<f64>,
    params: &SparseRepParams,
) -> Result<SparseRepFit> {
    SparseRepSolver::new(kmat, *params)?.fit(&sample.values)
}

/// Coefficients for every spectrum of a tensor plus per-spectrum diagnostics,
/// stored in `(k, i, j)` row-major order.
#[derive(Debug, Clone)]
pub struct SparseCoeffTensor {
    pub coeffs: SpectrumTensor,
    pub converged: Vec<bool>,
    pub kkt_residuals: Vec<f64>,
}

impl SparseCoeffTensor {
    pub fn non_converged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }
}

pub fn fit_all(
    tensor: &SpectrumTensor,
    kmat: &DMatrix<f64>,
    params: &SparseRepParams,
) -> Result<SparseCoeffTensor> {
    tensor.check_finite()?;
    let (n, p, d, len) = tensor.dims();
    let solver = SparseRepSolver::new(kmat, *params)?;
    if solver.dim() != len {
        return Err(Error::DimensionMismatch(format!(
            "tensor has {len} wavenumbers but kernel matrix is {}×{}",
            solver.dim(),
            solver.dim()
        )));
    }
    let slots: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|k| (0..p).flat_map(move |i| (0..d).map(move |j| (k, i, j))))
        .collect();
    let fit_one = |&(k, i, j): &(usize, usize, usize)| {
        let spectrum: Vec<f64> = tensor.values.slice(ndarray::s![k, i, j, ..]).to_vec();
        solver.fit(&spectrum)
    };

    #[cfg(feature = "parallel")]
    let fits: Vec<Result<SparseRepFit>> = {
        use rayon::prelude::*;
        slots.par_iter().map(fit_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<Result<SparseRepFit>> = slots.iter().map(fit_one).collect();

    let mut values = Array4::<f64>::zeros((n, p, d, len));
    let mut converged = Vec::with_capacity(slots.len());
    let mut kkt_residuals = Vec::with_capacity(slots.len());
    for (&(k, i, j), fit) in slots.iter().zip(fits) {
        let fit = fit?;
        for (l, c) in fit.coeffs.iter().enumerate() {
            values[[k, i, j, l]] = *c;
        }
        converged.push(fit.converged);
        kkt_residuals.push(fit.kkt_residual);
    }
    let mut coeffs = SpectrumTensor::new(
        values,
        tensor.grid.clone(),
        tensor.samples.clone(),
        TensorKind::Coefficients,
    )?;
    coeffs.notes = tensor.notes.clone();
    coeffs.notes.push(format!(
        "sparse representation: lambda_h = {}, lambda_1 = {}",
        params.lambda_h, params.lambda_1
    ));
    Ok(SparseCoeffTensor {
        coeffs,
        converged,
        kkt_residuals,
    })
}
