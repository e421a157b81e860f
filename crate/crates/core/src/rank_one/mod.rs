//! Rank-one multilinear regression
//!
//! ```text
//! y^k ≈ Σ_{i,j,l} α_i β_j γ_l x̃^k_{ijl}
//! ```
//!
//! fitted by minimizing
//!
//! ```text
//! (1/2n) Σ_k (y^k − ŷ^k)² + κ_α/√p ‖α‖₂ + κ_β/√d ‖β‖₂
//!     + κ_γ/N ‖γ‖₁ + κ_Γ/N² Σ_{l',l} Γ_{l'l} |γ_l' − γ_l|
//! ```
//!
//! over `α ≥ 0, β ≥ 0` by cycling exact-as-possible block solves
//! γ → α → β. An axis of length one is pinned to 1 and not updated, so
//! `p = d = 1` is a plain functional regression in γ and `d = 1` alternates
//! over (α, γ) only.

pub mod fused;
pub mod group;

use nalgebra::DMatrix;
use ndarray::{Array4, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SpectralGrid};

pub use fused::{AdmmConfig, AdmmDual, FusedGraph, FusedLassoProblem, GammaSolution, DEFAULT_PRUNE_REL};
pub use group::{BlockSolution, GroupConfig, NonnegGroupProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub kappa_alpha: f64,
    pub kappa_beta: f64,
    pub kappa_gamma: f64,
    pub kappa_gram: f64,
}

impl Default for RegParams {
    fn default() -> Self {
        RegParams::uniform(1e-2)
    }
}

impl RegParams {
    pub fn uniform(k: f64) -> Self {
        RegParams {
            kappa_alpha: k,
            kappa_beta: k,
            kappa_gamma: k,
            kappa_gram: k,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.kappa_alpha, self.kappa_beta, self.kappa_gamma, self.kappa_gram]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|k| *k >= 0.0 && k.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "regularization parameters must be nonnegative: {:?}",
                self.as_array()
            )))
        }
    }

    /// Lexicographic order on `(κ_α, κ_β, κ_γ, κ_Γ)`.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_array()
            .iter()
            .zip(other.as_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl RankOneModel {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.alpha.len(), self.beta.len(), self.gamma.len())
    }

    pub fn is_zero(&self) -> bool {
        [&self.alpha, &self.beta, &self.gamma]
            .iter()
            .any(|v| v.iter().all(|x| *x == 0.0))
    }

    /// `Σ_{ijl} α_i β_j γ_l x̃_{ijl}` for one `p × d × N` sample.
    pub fn predict(&self, sample: ArrayView3<'_, f64>) -> Result<f64> {
        let (p, d, len) = sample.dim();
        if (p, d, len) != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "sample is {p}×{d}×{len}, model is {:?}",
                self.dims()
            )));
        }
        let mut total = 0.0;
        for (i, &a) in self.alpha.iter().enumerate() {
            for (j, &b) in self.beta.iter().enumerate() {
                let w = a * b;
                if w == 0.0 {
                    continue;
                }
                let lane = sample.slice(ndarray::s![i, j, ..]);
                total += w * lane.iter().zip(&self.gamma).map(|(x, g)| x * g).sum::<f64>();
            }
        }
        Ok(total)
    }

    pub fn predict_all(&self, xtilde: &Array4<f64>) -> Result<Vec<f64>> {
        xtilde.axis_iter(Axis(0)).map(|s| self.predict(s)).collect()
    }
}

/// Training data for the rank-one fit: Gram-transformed covariates, a
/// response, and the fused-penalty graph.
#[derive(Debug, Clone)]
pub struct RankOneData {
    pub xtilde: Array4<f64>,
    pub response: Vec<f64>,
    pub graph: FusedGraph,
}

impl RankOneData {
    pub fn new(xtilde: Array4<f64>, response: Vec<f64>, gram: &DMatrix<f64>, prune_rel: f64) -> Result<Self> {
        let (n, _, _, len) = xtilde.dim();
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} samples but {} responses",
                response.len()
            )));
        }
        if gram.nrows() != len || gram.ncols() != len {
            return Err(Error::DimensionMismatch(format!(
                "Gram matrix is {}×{} for {len} wavenumbers",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if !xtilde.is_standard_layout() {
            return Err(Error::DimensionMismatch("covariates must be in standard layout".into()));
        }
        Ok(RankOneData {
            xtilde,
            response,
            graph: FusedGraph::from_gram(gram, prune_rel),
        })
    }

    /// `(n, p, d, N)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.xtilde.dim()
    }

    pub fn subset(&self, idx: &[usize]) -> RankOneData {
        RankOneData {
            xtilde: self.xtilde.select(Axis(0), idx),
            response: idx.iter().map(|&k| self.response[k]).collect(),
            graph: self.graph.clone(),
        }
    }

    fn raw(&self) -> &[f64] {
        self.xtilde.as_slice().expect("standard layout checked at construction")
    }
}

/// `M[k, i] = Σ_{j,l} β_j γ_l x̃[k,i,j,l]`.
pub fn alpha_design(data: &RankOneData, beta: &[f64], gamma: &[f64]) -> DMatrix<f64> {
    let (n, p, d, len) = data.dims();
    let x = data.raw();
    DMatrix::from_fn(n, p, |k, i| {
        let mut acc = 0.0;
        for (j, &b) in beta.iter().enumerate().take(d) {
            if b == 0.0 {
                continue;
            }
            let off = ((k * p + i) * d + j) * len;
            acc += b * dot(&x[off..off + len], gamma);
        }
        acc
    })
}

/// `M[k, j] = Σ_{i,l} α_i γ_l x̃[k,i,j,l]`.
pub fn beta_design(data: &RankOneData, alpha: &[f64], gamma: &[f64]) -> DMatrix<f64> {
    let (n, p, d, len) = data.dims();
    let x = data.raw();
    DMatrix::from_fn(n, d, |k, j| {
        let mut acc = 0.0;
        for (i, &a) in alpha.iter().enumerate().take(p) {
            if a == 0.0 {
                continue;
            }
            let off = ((k * p + i) * d + j) * len;
            acc += a * dot(&x[off..off + len], gamma);
        }
        acc
    })
}

/// `U[k, l] = Σ_{i,j} α_i β_j x̃[k,i,j,l]`.
pub fn gamma_design(data: &RankOneData, alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let (n, p, d, len) = data.dims();
    let x = data.raw();
    let mut u = DMatrix::<f64>::zeros(n, len);
    for k in 0..n {
        for (i, &a) in alpha.iter().enumerate() {
            for (j, &b) in beta.iter().enumerate() {
                let w = a * b;
                if w == 0.0 {
                    continue;
                }
                let off = ((k * p + i) * d + j) * len;
                for l in 0..len {
                    u[(k, l)] += w * x[off + l];
                }
            }
        }
    }
    u
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn predictions(model: &RankOneModel, data: &RankOneData) -> Vec<f64> {
    let u = gamma_design(data, &model.alpha, &model.beta);
    (0..u.nrows())
        .map(|k| (0..u.ncols()).map(|l| u[(k, l)] * model.gamma[l]).sum())
        .collect()
}

/// The five-term penalized objective; the fused term runs over the kept
/// edges of `data.graph`, counting each unordered pair twice.
pub fn objective(model: &RankOneModel, data: &RankOneData, params: &RegParams) -> f64 {
    let (n, p, d, len) = data.dims();
    let pred = predictions(model, data);
    let sse: f64 = pred
        .iter()
        .zip(&data.response)
        .map(|(a, y)| (y - a) * (y - a))
        .sum();
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    sse / (2.0 * n as f64)
        + params.kappa_alpha / (p as f64).sqrt() * norm2(&model.alpha)
        + params.kappa_beta / (d as f64).sqrt() * norm2(&model.beta)
        + params.kappa_gamma / len as f64 * model.gamma.iter().map(|g| g.abs()).sum::<f64>()
        + params.kappa_gram / (len * len) as f64 * 2.0 * data.graph.penalty(&model.gamma)
}

/// Gradient of `(1/2n)Σ(y − ŷ)²` with respect to (α, β, γ).
pub fn data_term_gradient(model: &RankOneModel, data: &RankOneData) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = data.dims().0 as f64;
    let pred = predictions(model, data);
    let resid: Vec<f64> = pred.iter().zip(&data.response).map(|(a, y)| a - y).collect();
    let grad = |m: DMatrix<f64>| -> Vec<f64> {
        (0..m.ncols())
            .map(|c| (0..m.nrows()).map(|k| resid[k] * m[(k, c)]).sum::<f64>() / n)
            .collect()
    };
    (
        grad(alpha_design(data, &model.beta, &model.gamma)),
        grad(beta_design(data, &model.alpha, &model.gamma)),
        grad(gamma_design(data, &model.alpha, &model.beta)),
    )
}

pub fn solve_alpha_subproblem(
    data: &RankOneData,
    beta: &[f64],
    gamma: &[f64],
    kappa_alpha: f64,
    warm: &[f64],
    cfg: &GroupConfig,
) -> BlockSolution {
    let p = data.dims().1;
    let design = alpha_design(data, beta, gamma);
    NonnegGroupProblem::from_design(&design, &data.response, kappa_alpha / (p as f64).sqrt())
        .solve(warm, cfg)
}

pub fn solve_beta_subproblem(
    data: &RankOneData,
    alpha: &[f64],
    gamma: &[f64],
    kappa_beta: f64,
    warm: &[f64],
    cfg: &GroupConfig,
) -> BlockSolution {
    let d = data.dims().2;
    let design = beta_design(data, alpha, gamma);
    NonnegGroupProblem::from_design(&design, &data.response, kappa_beta / (d as f64).sqrt())
        .solve(warm, cfg)
}

/// The γ block as a generalized lasso problem (exposed for certification).
pub fn gamma_problem(
    data: &RankOneData,
    alpha: &[f64],
    beta: &[f64],
    kappa_gamma: f64,
    kappa_gram: f64,
) -> FusedLassoProblem {
    let len = data.dims().3 as f64;
    let design = gamma_design(data, alpha, beta);
    let edge_scale = 2.0 * kappa_gram / (len * len);
    let edges = if kappa_gram > 0.0 {
        data.graph
            .edges
            .iter()
            .map(|&(a, b, g)| (a, b, edge_scale * g))
            .collect()
    } else {
        Vec::new()
    };
    FusedLassoProblem::from_design(&design, &data.response, kappa_gamma / len, edges)
}

pub fn solve_gamma_subproblem(
    data: &RankOneData,
    alpha: &[f64],
    beta: &[f64],
    kappa_gamma: f64,
    kappa_gram: f64,
    warm: &[f64],
    dual: Option<&AdmmDual>,
    cfg: &AdmmConfig,
) -> GammaSolution {
    gamma_problem(data, alpha, beta, kappa_gamma, kappa_gram).solve_warm(warm, dual, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when a sweep lowers the objective by less than this fraction.
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Total starts; the first is deterministic, the rest seeded random.
    pub restarts: usize,
    pub seed: u64,
    /// A block update may not raise the objective by more than this
    /// (relative to `max(1, |f|)`) without aborting the fit.
    pub divergence_slack: f64,
    pub admm: AdmmConfig,
    pub group: GroupConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol_outer: 1e-6,
            max_outer: 200,
            restarts: 1,
            seed: 0,
            divergence_slack: 1e-10,
            // inner solves are warm-started from the previous sweep
            admm: AdmmConfig {
                max_iter: 2000,
                ..AdmmConfig::default()
            },
            group: GroupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Init,
    Gamma,
    Alpha,
    Beta,
    Rescale,
    Collapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Objective after initialization and after every block update.
    pub objective_trace: Vec<f64>,
    pub block_trace: Vec<Block>,
    pub converged: bool,
    pub sweeps: usize,
    /// Block updates discarded because they did not lower the objective.
    pub rejected_updates: usize,
    pub zero_model: bool,
    pub alpha_residual: f64,
    pub beta_residual: f64,
    pub gamma_primal_residual: f64,
    pub gamma_dual_residual: f64,
    pub subproblems_converged: bool,
    /// Index of the start that produced the returned model.
    pub best_restart: usize,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    pub fn max_increase(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn default_init(p: usize, d: usize, len: usize) -> RankOneModel {
    RankOneModel {
        alpha: vec![1.0 / (p as f64).sqrt(); p],
        beta: vec![1.0 / (d as f64).sqrt(); d],
        gamma: vec![0.0; len],
    }
}

/// Alternating minimization from the default start plus `cfg.restarts − 1`
/// seeded random nonnegative starts; the lowest final objective wins.
pub fn fit_alternating(
    data: &RankOneData,
    params: &RegParams,
    cfg: &FitConfig,
) -> Result<(RankOneModel, FitReport)> {
    params.validate()?;
    let (n, p, d, len) = data.dims();
    if n < 2 {
        return Err(Error::Empty("rank-one fit needs at least two samples".into()));
    }
    let mut best: Option<(RankOneModel, FitReport)> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for start in 0..cfg.restarts.max(1) {
        let mut init = default_init(p, d, len);
        if start > 0 {
            randomize(&mut init.alpha, &mut rng);
            randomize(&mut init.beta, &mut rng);
        }
        let (model, mut report) = fit_from(data, params, cfg, init)?;
        report.best_restart = start;
        let better = match &best {
            None => true,
            Some((_, r)) => report.final_objective() < r.final_objective(),
        };
        if better {
            best = Some((model, report));
        }
    }
    Ok(best.expect("at least one start"))
}

fn randomize(v: &mut [f64], rng: &mut ChaCha8Rng) {
    if v.len() == 1 {
        return;
    }
    for x in v.iter_mut() {
        *x = rng.gen_range(0.05..1.0);
    }
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
}

/// Alternating minimization from a given starting point. Axes of length one
/// are pinned at 1.
pub fn fit_from(
    data: &RankOneData,
    params: &RegParams,
    cfg: &FitConfig,
    init: RankOneModel,
) -> Result<(RankOneModel, FitReport)> {
    params.validate()?;
    let (_, p, d, len) = data.dims();
    if init.dims() != (p, d, len) {
        return Err(Error::DimensionMismatch(format!(
            "initial model {:?} vs data ({p}, {d}, {len})",
            init.dims()
        )));
    }
    let mut model = init;
    let pin_alpha = p == 1;
    let pin_beta = d == 1;
    if pin_alpha {
        model.alpha = vec![1.0];
    }
    if pin_beta {
        model.beta = vec![1.0];
    }

    let mut obj = objective(&model, data, params);
    let mut report = FitReport {
        objective_trace: vec![obj],
        block_trace: vec![Block::Init],
        converged: false,
        sweeps: 0,
        rejected_updates: 0,
        zero_model: false,
        alpha_residual: 0.0,
        beta_residual: 0.0,
        gamma_primal_residual: 0.0,
        gamma_dual_residual: 0.0,
        subproblems_converged: true,
        best_restart: 0,
    };

    // Accepts `cand` if it does not raise the objective; a rise beyond the
    // slack means a block solver returned something worse than its warm
    // start.
    let mut step = |model: &mut RankOneModel,
                    cand: RankOneModel,
                    block: Block,
                    sweep: usize,
                    obj: &mut f64,
                    report: &mut FitReport|
     -> Result<()> {
        let c = objective(&cand, data, params);
        let slack = cfg.divergence_slack * obj.abs().max(1.0);
        if !(c <= *obj + slack) {
            return Err(Error::Divergence {
                block: match block {
                    Block::Gamma => "gamma",
                    Block::Alpha => "alpha",
                    Block::Beta => "beta",
                    Block::Rescale => "rescale",
                    _ => "collapse",
                },
                sweep,
                increase: c - *obj,
            });
        }
        if c <= *obj {
            *model = cand;
            *obj = c;
        } else {
            report.rejected_updates += 1;
        }
        report.objective_trace.push(*obj);
        report.block_trace.push(block);
        Ok(())
    };

    let mut gamma_dual: Option<AdmmDual> = None;
    for sweep in 1..=cfg.max_outer {
        report.sweeps = sweep;
        let start_obj = obj;

        let sol = solve_gamma_subproblem(
            data,
            &model.alpha,
            &model.beta,
            params.kappa_gamma,
            params.kappa_gram,
            &model.gamma,
            gamma_dual.as_ref(),
            &cfg.admm,
        );
        gamma_dual = Some(sol.dual.clone());
        report.gamma_primal_residual = sol.primal_residual;
        report.gamma_dual_residual = sol.dual_residual;
        report.subproblems_converged &= sol.converged || sol.polished;
        let cand = RankOneModel {
            gamma: sol.x,
            ..model.clone()
        };
        step(&mut model, cand, Block::Gamma, sweep, &mut obj, &mut report)?;
        if model.is_zero() {
            collapse(&mut model, pin_alpha, pin_beta, sweep, &mut obj, &mut report, &mut step)?;
            break;
        }

        if !pin_alpha {
            let sol = solve_alpha_subproblem(
                data,
                &model.beta,
                &model.gamma,
                params.kappa_alpha,
                &model.alpha,
                &cfg.group,
            );
            report.alpha_residual = sol.residual;
            report.subproblems_converged &= sol.converged;
            let cand = RankOneModel {
                alpha: sol.x,
                ..model.clone()
            };
            step(&mut model, cand, Block::Alpha, sweep, &mut obj, &mut report)?;
            if model.is_zero() {
                collapse(&mut model, pin_alpha, pin_beta, sweep, &mut obj, &mut report, &mut step)?;
                break;
            }
        }

        if !pin_beta {
            let sol = solve_beta_subproblem(
                data,
                &model.alpha,
                &model.gamma,
                params.kappa_beta,
                &model.beta,
                &cfg.group,
            );
            report.beta_residual = sol.residual;
            report.subproblems_converged &= sol.converged;
            let cand = RankOneModel {
                beta: sol.x,
                ..model.clone()
            };
            step(&mut model, cand, Block::Beta, sweep, &mut obj, &mut report)?;
            if model.is_zero() {
                collapse(&mut model, pin_alpha, pin_beta, sweep, &mut obj, &mut report, &mut step)?;
                break;
            }
        }

        if let Some(cand) = rebalance(&model, data, params, pin_alpha, pin_beta) {
            step(&mut model, cand, Block::Rescale, sweep, &mut obj, &mut report)?;
        }

        let decrease = start_obj - obj;
        if decrease <= cfg.tol_outer * start_obj.abs().max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
    }
    Ok((model, report))
}

/// The data term only sees `α ⊗ β ⊗ γ`, and each penalty is positively
/// homogeneous, so over rescalings `(cα α, cβ β, γ / (cα cβ))` the penalty
/// sum is minimized when the free blocks carry equal penalty.
fn rebalance(
    model: &RankOneModel,
    data: &RankOneData,
    params: &RegParams,
    pin_alpha: bool,
    pin_beta: bool,
) -> Option<RankOneModel> {
    let (_, p, d, len) = data.dims();
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a = params.kappa_alpha / (p as f64).sqrt() * norm2(&model.alpha);
    let b = params.kappa_beta / (d as f64).sqrt() * norm2(&model.beta);
    let g = params.kappa_gamma / len as f64 * model.gamma.iter().map(|x| x.abs()).sum::<f64>()
        + params.kappa_gram / (len * len) as f64 * 2.0 * data.graph.penalty(&model.gamma);
    let mut terms = vec![g];
    if !pin_alpha {
        terms.push(a);
    }
    if !pin_beta {
        terms.push(b);
    }
    if terms.len() < 2 || terms.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return None;
    }
    let target = terms.iter().map(|t| t.ln()).sum::<f64>() / terms.len() as f64;
    let target = target.exp();
    let ca = if pin_alpha { 1.0 } else { target / a };
    let cb = if pin_beta { 1.0 } else { target / b };
    let cg = 1.0 / (ca * cb);
    Some(RankOneModel {
        alpha: model.alpha.iter().map(|x| x * ca).collect(),
        beta: model.beta.iter().map(|x| x * cb).collect(),
        gamma: model.gamma.iter().map(|x| x * cg).collect(),
    })
}

/// Once any block is zero the prediction is identically zero and the
/// penalties alone are minimized by zeroing every free block.
fn collapse<F>(
    model: &mut RankOneModel,
    pin_alpha: bool,
    pin_beta: bool,
    sweep: usize,
    obj: &mut f64,
    report: &mut FitReport,
    step: &mut F,
) -> Result<()>
where
    F: FnMut(&mut RankOneModel, RankOneModel, Block, usize, &mut f64, &mut FitReport) -> Result<()>,
{
    let zero = RankOneModel {
        alpha: if pin_alpha { vec![1.0] } else { vec![0.0; model.alpha.len()] },
        beta: if pin_beta { vec![1.0] } else { vec![0.0; model.beta.len()] },
        gamma: vec![0.0; model.gamma.len()],
    };
    step(model, zero, Block::Collapse, sweep, obj, report)?;
    report.zero_model = true;
    report.converged = true;
    Ok(())
}

/// `C(t) = Σ_l γ_l k(t, t_l)` over the kept wavenumbers.
pub fn eval_coefficient_function(
    model: &RankOneModel,
    kernel: &KernelSpec,
    kept_grid: &SpectralGrid,
    t: f64,
) -> f64 {
    model
        .gamma
        .iter()
        .zip(kept_grid.points())
        .map(|(g, &tl)| g * kernel.value(t, tl))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data() -> RankOneData {
        let x = Array4::from_shape_fn((6, 2, 3, 4), |(k, i, j, l)| {
            ((k * 7 + i * 3 + j * 5 + l * 11) % 13) as f64 / 13.0 + 0.1
        });
        let y: Vec<f64> = (0..6).map(|k| (k as f64 - 2.5) / 2.5).collect();
        let gram = DMatrix::from_fn(4, 4, |a, b| 1.0 / (1.0 + (a as f64 - b as f64).powi(2)));
        RankOneData::new(x, y, &gram, DEFAULT_PRUNE_REL).unwrap()
    }

    #[test]
    fn predict_arithmetic() {
        let m = RankOneModel {
            alpha: vec![2.0],
            beta: vec![3.0],
            gamma: vec![0.5],
        };
        let x = Array4::from_elem((1, 1, 1, 1), 4.0);
        assert_eq!(m.predict(x.index_axis(Axis(0), 0)).unwrap(), 12.0);
        let z = RankOneModel {
            gamma: vec![0.0],
            ..m.clone()
        };
        assert_eq!(z.predict(x.index_axis(Axis(0), 0)).unwrap(), 0.0);
        let bad = Array4::from_elem((1, 2, 1, 1), 4.0);
        assert!(m.predict(bad.index_axis(Axis(0), 0)).is_err());
    }

    #[test]
    fn prediction_is_scale_invariant() {
        let data = toy_data();
        let m = RankOneModel {
            alpha: vec![0.3, 0.9],
            beta: vec![0.2, 0.5, 1.1],
            gamma: vec![0.4, -0.2, 0.0, 1.3],
        };
        let (c1, c2) = (2.5, 0.125);
        let c3 = 1.0 / (c1 * c2);
        let scaled = RankOneModel {
            alpha: m.alpha.iter().map(|a| a * c1).collect(),
            beta: m.beta.iter().map(|b| b * c2).collect(),
            gamma: m.gamma.iter().map(|g| g * c3).collect(),
        };
        let a = m.predict_all(&data.xtilde).unwrap();
        let b = scaled.predict_all(&data.xtilde).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_special_cases() {
        let data = toy_data();
        let zero = RankOneModel {
            alpha: vec![0.0; 2],
            beta: vec![0.0; 3],
            gamma: vec![0.0; 4],
        };
        let sy: f64 = data.response.iter().map(|y| y * y).sum();
        let f = objective(&zero, &data, &RegParams::uniform(0.3));
        assert!((f - sy / 12.0).abs() < 1e-15);

        let m = RankOneModel {
            alpha: vec![0.5, 0.5],
            beta: vec![1.0, 0.0, 0.2],
            gamma: vec![0.7; 4],
        };
        let only_gram = RegParams {
            kappa_alpha: 0.0,
            kappa_beta: 0.0,
            kappa_gamma: 0.0,
            kappa_gram: 5.0,
        };
        let ls = objective(&m, &data, &RegParams::uniform(0.0));
        assert_eq!(objective(&m, &data, &only_gram), ls);
    }

    #[test]
    fn single_axis_is_pinned() {
        let x = Array4::from_shape_fn((5, 1, 1, 3), |(k, _, _, l)| 1.0 + ((k + 2 * l) % 4) as f64);
        let y = vec![0.5, -0.2, 0.1, 0.8, -1.0];
        let gram = DMatrix::identity(3, 3);
        let data = RankOneData::new(x, y, &gram, 0.0).unwrap();
        let (m, rep) = fit_alternating(&data, &RegParams::uniform(1e-3), &FitConfig::default()).unwrap();
        assert_eq!(m.alpha, vec![1.0]);
        assert_eq!(m.beta, vec![1.0]);
        assert!(rep.block_trace.iter().all(|b| matches!(b, Block::Init | Block::Gamma | Block::Collapse)));
    }

    #[test]
    fn heavy_regularization_collapses_to_zero_model() {
        let data = toy_data();
        let (m, rep) = fit_alternating(&data, &RegParams::uniform(1e4), &FitConfig::default()).unwrap();
        assert!(rep.zero_model);
        assert!(m.gamma.iter().all(|g| *g == 0.0));
        assert!(m.predict_all(&data.xtilde).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coefficient_function_cases() {
        let kernel = KernelSpec::lorentzian(2.0).unwrap();
        let grid = SpectralGrid::new(vec![10.0, 20.0, 30.0]).unwrap();
        let mut m = RankOneModel {
            alpha: vec![1.0],
            beta: vec![1.0],
            gamma: vec![0.0; 3],
        };
        assert_eq!(eval_coefficient_function(&m, &kernel, &grid, 15.0), 0.0);
        m.gamma = vec![1.0, 0.0, 0.0];
        assert_eq!(eval_coefficient_function(&m, &kernel, &grid, 10.0), 1.0);
        m.gamma = vec![1.0, -2.0, 0.5];
        let far = eval_coefficient_function(&m, &kernel, &grid, 30.0 + 200.0);
        assert!(far.abs() <= 1e-4 * 3.5);
    }

    #[test]
    fn lex_order() {
        let a = RegParams { kappa_alpha: 1.0, kappa_beta: 0.0, kappa_gamma: 0.0, kappa_gram: 0.0 };
        let b = RegParams { kappa_alpha: 1.0, kappa_beta: 0.0, kappa_gamma: 0.1, kappa_gram: 0.0 };
        assert!(a.lex_cmp(&b).is_lt());
        assert!(b.lex_cmp(&a).is_gt());
        assert!(a.lex_cmp(&a).is_eq());
    }
}
