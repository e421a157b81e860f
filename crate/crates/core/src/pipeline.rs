//! The standard preparation chain: sparse representations → scores →
//! top-N selection → x̃ on the kept grid → normalization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, GramMode, KernelSpec, SpectralGrid};
use crate::preprocess::{apply_normalization, normalize, NormalizationMode, NormalizationRecord};
use crate::selection::{
    compute_scores, select_top, xtilde_from_coefficients, ScoreMode, ScoreVector, SelectedSubset, DEFAULT_KEEP,
};
use crate::sparse_rep::{fit_all, SparseCoeffTensor, SparseRepParams};
use crate::tensor::{SpectrumTensor, TensorKind};

pub const DEFAULT_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel: KernelSpec,
    pub sparse: SparseRepParams,
    pub score_mode: ScoreMode,
    pub keep: usize,
    pub gram_mode: GramMode,
    pub normalization: NormalizationMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: KernelSpec::lorentzian(DEFAULT_WIDTH).expect("positive width"),
            sparse: SparseRepParams::default(),
            score_mode: ScoreMode::default(),
            keep: DEFAULT_KEEP,
            gram_mode: GramMode::default(),
            normalization: NormalizationMode::default(),
        }
    }
}

/// Everything needed to turn a new raw tensor into model covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub config: PipelineConfig,
    pub full_grid: SpectralGrid,
    pub kept_indices: Vec<usize>,
    pub kept_grid: SpectralGrid,
    pub normalization: NormalizationRecord,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub coeffs: SparseCoeffTensor,
    pub scores: ScoreVector,
    pub subset: SelectedSubset,
    /// Normalized x̃ on the kept grid.
    pub xtilde: SpectrumTensor,
    pub gram: DMatrix<f64>,
    pub state: PipelineState,
}

pub fn run_pipeline(raw: &SpectrumTensor, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if raw.kind != TensorKind::Raw {
        return Err(Error::InvalidParameter(format!("pipeline expects raw spectra, got {:?}", raw.kind)));
    }
    let kmat = kernel_matrix(&cfg.kernel, &raw.grid)?;
    let coeffs = fit_all(raw, &kmat, &cfg.sparse)?;
    from_coefficients(coeffs, cfg)
}

/// The chain after the sparse fits.
pub fn from_coefficients(coeffs: SparseCoeffTensor, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let scores = compute_scores(&coeffs.coeffs, cfg.score_mode);
    let subset = select_top(&scores, &coeffs.coeffs.grid, cfg.keep)?;
    let (xt, gram) = xtilde_from_coefficients(&coeffs.coeffs, &subset, &cfg.kernel, cfg.gram_mode)?;
    let (xtilde, record) = normalize(&xt, cfg.normalization);
    let state = PipelineState {
        config: *cfg,
        full_grid: coeffs.coeffs.grid.clone(),
        kept_indices: subset.kept_indices.clone(),
        kept_grid: subset.grid.clone(),
        normalization: record,
    };
    Ok(PipelineOutput {
        coeffs,
        scores,
        subset,
        xtilde,
        gram,
        state,
    })
}

impl PipelineState {
    /// Replays the chain on new raw spectra with the stored selection and
    /// normalization.
    pub fn transform_raw(&self, raw: &SpectrumTensor) -> Result<(SpectrumTensor, DMatrix<f64>)> {
        if raw.grid != self.full_grid {
            return Err(Error::DimensionMismatch("raw spectra are on a different grid than the training data".into()));
        }
        let kmat = kernel_matrix(&self.config.kernel, &raw.grid)?;
        let coeffs = fit_all(raw, &kmat, &self.config.sparse)?;
        self.transform_coefficients(&coeffs.coeffs)
    }

    pub fn transform_coefficients(&self, coeffs: &SpectrumTensor) -> Result<(SpectrumTensor, DMatrix<f64>)> {
        if coeffs.grid != self.full_grid {
            return Err(Error::DimensionMismatch("coefficients are on a different grid than the training data".into()));
        }
        let subset = SelectedSubset {
            kept_indices: self.kept_indices.clone(),
            grid: self.kept_grid.clone(),
        };
        let (xt, gram) = xtilde_from_coefficients(coeffs, &subset, &self.config.kernel, self.config.gram_mode)?;
        Ok((apply_normalization(&xt, &self.normalization)?, gram))
    }
}
