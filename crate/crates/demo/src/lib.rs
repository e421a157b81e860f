//! Browser demo: each export returns a finished SVG document, or an
//! `error: …` string the page shows as text.

use spectensor::kernel::{kernel_matrix, KernelSpec, SpectralGrid};
use spectensor::pipeline::PipelineConfig;
use spectensor::plot;
use spectensor::preprocess::normalize_response;
use spectensor::rank_one::{fit_alternating, FitConfig, RankOneData, RegParams};
use spectensor::sparse_rep::{SparseRepParams, SparseRepSolver};
use spectensor::synth::{generate_tensor, simulate, ResponseNoise, SyntheticSpec};
use wasm_bindgen::prelude::*;

fn or_error(r: spectensor::Result<String>) -> String {
    r.unwrap_or_else(|e| format!("error: {e}"))
}

/// Fits one synthetic spectrum on 950–1700 cm⁻¹ and plots data, fit and
/// coefficients.
#[wasm_bindgen]
pub fn sparse_fit_svg(width: f64, lambda_h: f64, lambda_1: f64, noise: f64, seed: u32) -> String {
    or_error((|| {
        let grid = SpectralGrid::uniform(950.0, 1700.0, 300)?;
        let mut spec = SyntheticSpec::new(1, 1, 1, grid.clone(), seed as u64);
        spec.sigma_spec = noise.max(0.0);
        let (raw, _) = generate_tensor(&spec)?;
        let observed: Vec<f64> = raw.values.iter().cloned().collect();
        let kmat = kernel_matrix(&KernelSpec::lorentzian(width)?, &grid)?;
        let params = SparseRepParams {
            lambda_h,
            lambda_1,
            ..SparseRepParams::default()
        };
        let fit = SparseRepSolver::new(&kmat, params)?.fit(&observed)?;
        Ok(plot::spectrum_fit(grid.points(), Some(&observed), &fit.fitted, &fit.coeffs))
    })())
}

/// Scores every wavenumber over a small synthetic batch and marks the
/// `keep` highest.
#[wasm_bindgen]
pub fn selection_svg(keep: u32, width: f64, seed: u32) -> String {
    or_error((|| {
        let grid = SpectralGrid::uniform(950.0, 1700.0, 150)?;
        let spec = SyntheticSpec::new(6, 2, 2, grid, seed as u64);
        let cfg = PipelineConfig {
            kernel: KernelSpec::lorentzian(width)?,
            keep: keep.max(1) as usize,
            ..PipelineConfig::default()
        };
        let ds = simulate(&spec, &cfg, true, ResponseNoise::SnrDb(20.0))?;
        let r = &ds.reference;
        Ok(plot::scores(ds.raw.grid.points(), &r.scores.scores, &r.subset.kept_indices))
    })())
}

/// Plants a rank-one response, refits it with all four κ set to `kappa`,
/// and plots fitted against actual responses.
#[wasm_bindgen]
pub fn rank_one_svg(kappa: f64, snr_db: f64, seed: u32) -> String {
    or_error((|| {
        let grid = SpectralGrid::uniform(950.0, 1700.0, 120)?;
        let spec = SyntheticSpec::new(30, 3, 4, grid, seed as u64);
        let cfg = PipelineConfig {
            keep: 20,
            ..PipelineConfig::default()
        };
        let ds = simulate(&spec, &cfg, true, ResponseNoise::SnrDb(snr_db))?;
        let y = ds.truth.raw_response.clone().unwrap_or_default();
        let resp = normalize_response(&y)?;
        let data = RankOneData::new(
            ds.reference.xtilde.values.clone(),
            resp.values.clone(),
            &ds.reference.gram,
            spectensor::rank_one::DEFAULT_PRUNE_REL,
        )?;
        let (model, _) = fit_alternating(&data, &RegParams::uniform(kappa), &FitConfig::default())?;
        let pred = model.predict_all(&data.xtilde)?;
        let points: Vec<(f64, f64)> = pred
            .iter()
            .zip(&y)
            .map(|(z, a)| (*a, resp.transform.inverse(*z)))
            .collect();
        Ok(plot::scatter_pred_vs_actual(&points, "response"))
    })())
}
