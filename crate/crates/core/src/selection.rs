//! Wavenumber scoring, top-`N` selection and the Gram transform `x̃ = Γx`.

use nalgebra::DMatrix;
use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, GramMode, KernelSpec, SpectralGrid};
use crate::tensor::{SpectrumTensor, TensorKind};

pub const DEFAULT_KEEP: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Average coefficient mass at each wavenumber.
    #[default]
    Weighted,
    /// Fraction of spectra with a nonzero coefficient at each wavenumber.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSubset {
    /// Ascending indices into the full grid.
    pub kept_indices: Vec<usize>,
    pub grid: SpectralGrid,
}

pub fn compute_scores(coeffs: &SpectrumTensor, mode: ScoreMode) -> ScoreVector {
    let (n, p, d, len) = coeffs.dims();
    let denom = (n * p * d).max(1) as f64;
    let mut scores = vec![0.0; len];
    for lane in coeffs.values.lanes(Axis(3)) {
        for (s, &x) in scores.iter_mut().zip(lane.iter()) {
            *s += match mode {
                ScoreMode::Weighted => x,
                ScoreMode::Frequency => f64::from(u8::from(x != 0.0)),
            };
        }
    }
    scores.iter_mut().for_each(|s| *s /= denom);
    ScoreVector { scores, mode }
}

/// Indices of the `keep` largest scores, ties toward the lower index,
/// returned in grid order.
pub fn select_top(scores: &ScoreVector, grid: &SpectralGrid, keep: usize) -> Result<SelectedSubset> {
    let len = scores.scores.len();
    if len != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{len} scores for a grid of {}",
            grid.len()
        )));
    }
    if keep == 0 || keep > len {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {keep} of {len} wavenumbers"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(a.cmp(&b))
    });
    let mut kept_indices = order[..keep].to_vec();
    kept_indices.sort_unstable();
    let grid = grid.subset(&kept_indices)?;
    Ok(SelectedSubset { kept_indices, grid })
}

/// Restricts the wavenumber axis of `tensor` to `indices`.
pub fn restrict_wavenumbers(tensor: &SpectrumTensor, indices: &[usize]) -> Result<SpectrumTensor> {
    let len = tensor.grid.len();
    if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
        return Err(Error::DimensionMismatch(format!(
            "kept index {bad} outside grid of {len}"
        )));
    }
    let mut out = SpectrumTensor::new(
        tensor.values.select(Axis(3), indices),
        tensor.grid.subset(indices)?,
        tensor.samples.clone(),
        tensor.kind,
    )?;
    out.notes = tensor.notes.clone();
    Ok(out)
}

/// `x̃[k,i,j,l'] = Σ_l Γ[l', l] x[k,i,j,l]`.
pub fn transform_xtilde(coeffs: &Array4<f64>, gram: &DMatrix<f64>) -> Result<Array4<f64>> {
    let (n, p, d, len) = coeffs.dim();
    if gram.nrows() != len || gram.ncols() != len {
        return Err(Error::DimensionMismatch(format!(
            "Gram matrix is {}×{} but coefficients have {len} wavenumbers",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let mut out = Array4::<f64>::zeros((n, p, d, len));
    for (src, mut dst) in coeffs.lanes(Axis(3)).into_iter().zip(out.lanes_mut(Axis(3))) {
        for (lp, o) in dst.iter_mut().enumerate() {
            *o = src
                .iter()
                .enumerate()
                .map(|(l, x)| gram[(lp, l)] * x)
                .sum();
        }
    }
    Ok(out)
}

/// Full-grid coefficients → Gram-transformed covariates on the kept grid.
/// Γ is evaluated directly between kept wavenumbers.
pub fn xtilde_from_coefficients(
    coeffs: &SpectrumTensor,
    subset: &SelectedSubset,
    kernel: &KernelSpec,
    mode: GramMode,
) -> Result<(SpectrumTensor, DMatrix<f64>)> {
    let kept = restrict_wavenumbers(coeffs, &subset.kept_indices)?;
    let gram = gram_matrix(kernel, &kept.grid, mode)?.entries;
    let values = transform_xtilde(&kept.values, &gram)?;
    let mut out = SpectrumTensor::new(values, kept.grid, kept.samples, TensorKind::Xtilde)?;
    out.notes = kept.notes;
    Ok((out, gram))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SampleMeta;

    fn tensor(values: Array4<f64>) -> SpectrumTensor {
        let (n, _, _, len) = values.dim();
        SpectrumTensor::new(
            values,
            SpectralGrid::uniform(0.0, len as f64 - 1.0, len).unwrap(),
            (0..n).map(SampleMeta::numbered).collect(),
            TensorKind::Coefficients,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_score_zero() {
        let t = tensor(Array4::zeros((2, 2, 2, 5)));
        for mode in [ScoreMode::Weighted, ScoreMode::Frequency] {
            assert!(compute_scores(&t, mode).scores.iter().all(|s| *s == 0.0));
        }
    }

    #[test]
    fn single_mass_at_full_scale_dimensions() {
        let mut v = Array4::zeros((37, 5, 10, 6));
        v[[12, 3, 7, 4]] = 1850.0;
        let s = compute_scores(&tensor(v), ScoreMode::Weighted);
        assert_eq!(s.scores, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn frequency_saturates_at_one() {
        let mut v = Array4::zeros((3, 2, 2, 4));
        v.slice_mut(ndarray::s![.., .., .., 2]).fill(0.25);
        v[[0, 0, 0, 1]] = 7.0;
        let s = compute_scores(&tensor(v), ScoreMode::Frequency);
        assert_eq!(s.scores[2], 1.0);
        assert!((s.scores[1] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn select_top_cases() {
        let grid = SpectralGrid::uniform(0.0, 3.0, 4).unwrap();
        let sv = ScoreVector {
            scores: vec![0.3, 0.9, 0.9, 0.1],
            mode: ScoreMode::Weighted,
        };
        assert_eq!(select_top(&sv, &grid, 2).unwrap().kept_indices, vec![1, 2]);
        assert_eq!(select_top(&sv, &grid, 1).unwrap().kept_indices, vec![1]);
        assert_eq!(select_top(&sv, &grid, 4).unwrap().kept_indices, vec![0, 1, 2, 3]);
        assert!(select_top(&sv, &grid, 5).is_err());
        assert!(select_top(&sv, &grid, 0).is_err());
        let sub = select_top(&sv, &grid, 2).unwrap();
        assert_eq!(sub.grid.points(), &[1.0, 2.0]);
    }

    #[test]
    fn keeps_forty_of_544() {
        let grid = SpectralGrid::uniform(954.0, 1700.0, 544).unwrap();
        let sv = ScoreVector {
            scores: (0..544).map(|l| ((l * 37) % 101) as f64).collect(),
            mode: ScoreMode::Weighted,
        };
        let sub = select_top(&sv, &grid, DEFAULT_KEEP).unwrap();
        assert_eq!(sub.kept_indices.len(), 40);
        assert!(sub.kept_indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn identity_gram_and_zero_inputs() {
        let v = Array4::from_shape_fn((2, 1, 2, 3), |(k, i, j, l)| (k + 2 * i + 3 * j + l) as f64);
        assert_eq!(transform_xtilde(&v, &DMatrix::identity(3, 3)).unwrap(), v);
        let z = Array4::<f64>::zeros((1, 1, 1, 3));
        let g = DMatrix::from_element(3, 3, 0.5);
        assert!(transform_xtilde(&z, &g).unwrap().iter().all(|x| *x == 0.0));
        assert!(transform_xtilde(&v, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn single_kept_wavenumber_scales_by_half_pi() {
        // Γ diagonal for W = 1 is π/2 (closed form, confirmed by quadrature in kernel tests).
        let v = Array4::from_shape_vec((1, 1, 1, 3), vec![0.0, 2.0, 0.0]).unwrap();
        let t = tensor(v);
        let sub = SelectedSubset {
            kept_indices: vec![1],
            grid: t.grid.subset(&[1]).unwrap(),
        };
        let (x, gram) = xtilde_from_coefficients(
            &t,
            &sub,
            &KernelSpec::lorentzian(1.0).unwrap(),
            GramMode::ClosedFormRealLine,
        )
        .unwrap();
        assert_eq!(gram.shape(), (1, 1));
        assert!((x.values[[0, 0, 0, 0]] - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(x.kind, TensorKind::Xtilde);
    }
}
