//! Comparison predictors: the training mean, and least squares on a
//! two-peak intensity ratio.

use nalgebra::DMatrix;
use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SpectralGrid;
use crate::tensor::{SpectrumTensor, TensorKind};

pub const DEFAULT_PEAK_NUM: f64 = 954.0;
pub const DEFAULT_PEAK_DEN: f64 = 1450.0;
/// Denominator magnitudes below this make a sample unusable.
pub const EPS_DEN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanPredictor {
    pub mean: f64,
}

impl MeanPredictor {
    pub fn fit(train: &[f64]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("mean predictor needs at least one training response".into()));
        }
        Ok(MeanPredictor {
            mean: train.iter().sum::<f64>() / train.len() as f64,
        })
    }

    pub fn predict(&self) -> f64 {
        self.mean
    }
}

/// Fitted spectra `K x` for every `(k, i, j)` of a coefficient tensor.
pub fn fitted_spectra(coeffs: &SpectrumTensor, kmat: &DMatrix<f64>) -> Result<SpectrumTensor> {
    let (n, p, d, len) = coeffs.dims();
    if kmat.nrows() != len || kmat.ncols() != len {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrix is {}×{} for {len} wavenumbers",
            kmat.nrows(),
            kmat.ncols()
        )));
    }
    let mut out = Array4::<f64>::zeros((n, p, d, len));
    for k in 0..n {
        for i in 0..p {
            for j in 0..d {
                let x = coeffs.values.slice(s![k, i, j, ..]);
                for m in 0..len {
                    out[[k, i, j, m]] = (0..len).map(|l| kmat[(m, l)] * x[l]).sum();
                }
            }
        }
    }
    let mut t = SpectrumTensor::new(out, coeffs.grid.clone(), coeffs.samples.clone(), TensorKind::Raw)?;
    t.notes = coeffs.notes.clone();
    t.notes.push("fitted spectra from sparse coefficients".into());
    Ok(t)
}

fn check_peak(grid: &SpectralGrid, peak: f64) -> Result<usize> {
    if !(peak >= grid.min() && peak <= grid.max()) {
        return Err(Error::InvalidParameter(format!(
            "peak {peak} lies outside the grid range [{}, {}]",
            grid.min(),
            grid.max()
        )));
    }
    Ok(grid.nearest_index(peak))
}

/// Per sample: mean over (i, j) of the spectrum at the grid point nearest
/// each peak, then their ratio. `None` marks a sample whose denominator is
/// numerically zero.
pub fn extract_ratio_covariate(fitted: &SpectrumTensor, peak_num: f64, peak_den: f64) -> Result<Vec<Option<f64>>> {
    let ln = check_peak(&fitted.grid, peak_num)?;
    let ld = check_peak(&fitted.grid, peak_den)?;
    let (n, p, d, _) = fitted.dims();
    let count = (p * d) as f64;
    Ok((0..n)
        .map(|k| {
            let a1 = fitted.values.slice(s![k, .., .., ln]).sum() / count;
            let a2 = fitted.values.slice(s![k, .., .., ld]).sum() / count;
            (a2.abs() >= EPS_DEN).then(|| a1 / a2)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRegressionModel {
    pub peak_num: f64,
    pub peak_den: f64,
    pub intercept: f64,
    pub slope: f64,
    pub fit_intercept: bool,
    /// Set when the design was degenerate and the model is the training mean.
    pub mean_fallback: bool,
    pub train_mean: f64,
    pub warnings: Vec<String>,
}

impl RatioRegressionModel {
    /// Ordinary least squares of `y` on `(1, ratio)`, or on `ratio` alone
    /// when `fit_intercept` is false. Samples with no covariate are skipped.
    pub fn fit(
        covariates: &[Option<f64>],
        responses: &[f64],
        peak_num: f64,
        peak_den: f64,
        fit_intercept: bool,
    ) -> Result<Self> {
        if covariates.len() != responses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariates for {} responses",
                covariates.len(),
                responses.len()
            )));
        }
        let train_mean = MeanPredictor::fit(responses)?.mean;
        let pairs: Vec<(f64, f64)> = covariates
            .iter()
            .zip(responses)
            .filter_map(|(c, y)| c.map(|c| (c, *y)))
            .collect();
        let mut model = RatioRegressionModel {
            peak_num,
            peak_den,
            intercept: train_mean,
            slope: 0.0,
            fit_intercept,
            mean_fallback: false,
            train_mean,
            warnings: Vec::new(),
        };
        let skipped = responses.len() - pairs.len();
        if skipped > 0 {
            model.warnings.push(format!("{skipped} samples without a usable ratio were skipped"));
        }
        let m = pairs.len() as f64;
        let xm = pairs.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = pairs.iter().map(|p| p.1).sum::<f64>() / m;
        let spread = pairs.iter().map(|p| (p.0 - xm).abs()).fold(0.0, f64::max);
        if pairs.len() < 2 || spread <= 1e-12 * xm.abs().max(1e-300) {
            model.mean_fallback = true;
            model
                .warnings
                .push("ratio covariate is constant on the training set; using the mean predictor".into());
            return Ok(model);
        }
        if fit_intercept {
            let sxx: f64 = pairs.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
            let sxy: f64 = pairs.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
            model.slope = sxy / sxx;
            model.intercept = ym - model.slope * xm;
        } else {
            let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
            model.slope = sxy / sxx;
            model.intercept = 0.0;
        }
        Ok(model)
    }

    /// Samples without a covariate get the training mean.
    pub fn predict(&self, covariate: Option<f64>) -> f64 {
        match (self.mean_fallback, covariate) {
            (false, Some(r)) => self.intercept + self.slope * r,
            _ => self.train_mean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SampleMeta;

    fn flat(values: [f64; 3]) -> SpectrumTensor {
        let v = Array4::from_shape_fn((2, 2, 3, 3), |(_, _, _, l)| values[l]);
        SpectrumTensor::new(
            v,
            SpectralGrid::new(vec![900.0, 954.0, 1450.0]).unwrap(),
            (0..2).map(SampleMeta::numbered).collect(),
            TensorKind::Raw,
        )
        .unwrap()
    }

    #[test]
    fn mean_predictor_cases() {
        assert_eq!(MeanPredictor::fit(&[-1.0, 0.0, 1.0]).unwrap().predict(), 0.0);
        assert_eq!(MeanPredictor::fit(&[2.0]).unwrap().predict(), 2.0);
        assert!(MeanPredictor::fit(&[]).is_err());
    }

    #[test]
    fn ratio_of_flat_spectra() {
        let r = extract_ratio_covariate(&flat([0.0, 2.0, 4.0]), 954.0, 1450.0).unwrap();
        assert_eq!(r, vec![Some(0.5), Some(0.5)]);
        let z = extract_ratio_covariate(&flat([0.0, 2.0, 0.0]), 954.0, 1450.0).unwrap();
        assert_eq!(z, vec![None, None]);
        assert!(extract_ratio_covariate(&flat([1.0, 2.0, 4.0]), 954.0, 1800.0).is_err());
    }

    #[test]
    fn exact_affine_fit() {
        let x = [0.1, 0.4, 0.7, 1.3];
        let cov: Vec<_> = x.iter().map(|v| Some(*v)).collect();
        let y: Vec<_> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let m = RatioRegressionModel::fit(&cov, &y, 954.0, 1450.0, true).unwrap();
        assert!((m.slope - 3.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
        for (c, t) in cov.iter().zip(&y) {
            assert!((m.predict(*c) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_covariate_falls_back() {
        let cov = vec![Some(2.0); 4];
        let y = [1.0, 2.0, 3.0, 6.0];
        let m = RatioRegressionModel::fit(&cov, &y, 954.0, 1450.0, true).unwrap();
        assert!(m.mean_fallback);
        assert_eq!(m.predict(Some(10.0)), 3.0);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn through_origin() {
        let cov = vec![Some(1.0), Some(2.0)];
        let m = RatioRegressionModel::fit(&cov, &[2.0, 4.0], 954.0, 1450.0, false).unwrap();
        assert_eq!(m.intercept, 0.0);
        assert!((m.slope - 2.0).abs() < 1e-15);
    }
}
