//! Grid truncation and subsampling, tensor normalization, and response
//! centering.

use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SpectralGrid;
use crate::tensor::SpectrumTensor;

pub fn truncate_grid(tensor: &SpectrumTensor, upper: f64) -> Result<SpectrumTensor> {
    let keep = tensor.grid.points().partition_point(|&t| t <= upper);
    if keep == 0 {
        return Err(Error::InvalidGrid(format!(
            "truncation at {upper} leaves no wavenumbers (grid starts at {})",
            tensor.grid.min()
        )));
    }
    let mut out = tensor.clone();
    if keep < tensor.grid.len() {
        out.values = tensor.values.slice(s![.., .., .., ..keep]).to_owned();
        out.grid = SpectralGrid::new(tensor.grid.points()[..keep].to_vec())?;
        out.notes.push(format!(
            "truncated above {upper}: {} -> {keep} wavenumbers",
            tensor.grid.len()
        ));
    }
    Ok(out)
}

/// Keeps wavenumber indices `0, m, 2m, …`.
pub fn subsample_grid(tensor: &SpectrumTensor, m: usize) -> Result<SpectrumTensor> {
    if m == 0 {
        return Err(Error::InvalidParameter("subsampling rate must be ≥ 1".into()));
    }
    if m == 1 {
        return Ok(tensor.clone());
    }
    let idx: Vec<usize> = (0..tensor.grid.len()).step_by(m).collect();
    let mut out = tensor.clone();
    out.values = tensor.values.select(Axis(3), &idx);
    out.grid = tensor.grid.subset(&idx)?;
    out.notes
        .push(format!("subsampled 1/{m}: {} -> {} wavenumbers", tensor.grid.len(), idx.len()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide each (source, detector) slice by its max |value| over samples
    /// and wavenumbers.
    #[default]
    MaxAmplitude,
    /// Divide each (sample, source) slice by its ℓ2 norm over detectors and
    /// wavenumbers.
    SourceEnergy,
    None,
}

/// What a normalization did, sufficient to replay it on new samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub mode: NormalizationMode,
    /// Max-amplitude divisors in `(i, j)` row-major order; empty otherwise.
    pub scales: Vec<f64>,
    /// Slices left unchanged because they were identically zero:
    /// `(i, j)` for max-amplitude, `(k, i)` for source energy.
    pub degenerate: Vec<(usize, usize)>,
    /// Wavenumber count the statistics were computed on.
    pub grid_len: usize,
}

pub fn normalize(
    tensor: &SpectrumTensor,
    mode: NormalizationMode,
) -> (SpectrumTensor, NormalizationRecord) {
    match mode {
        NormalizationMode::MaxAmplitude => normalize_max_amplitude(tensor),
        NormalizationMode::SourceEnergy => normalize_source_energy(tensor),
        NormalizationMode::None => (
            tensor.clone(),
            NormalizationRecord {
                mode,
                scales: Vec::new(),
                degenerate: Vec::new(),
                grid_len: tensor.grid.len(),
            },
        ),
    }
}

pub fn normalize_max_amplitude(tensor: &SpectrumTensor) -> (SpectrumTensor, NormalizationRecord) {
    let (_, p, d, _) = tensor.dims();
    let mut scales = Vec::with_capacity(p * d);
    let mut degenerate = Vec::new();
    for i in 0..p {
        for j in 0..d {
            let m = tensor
                .values
                .slice(s![.., i, j, ..])
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 {
                scales.push(m);
            } else {
                scales.push(1.0);
                degenerate.push((i, j));
            }
        }
    }
    let record = NormalizationRecord {
        mode: NormalizationMode::MaxAmplitude,
        scales,
        degenerate,
        grid_len: tensor.grid.len(),
    };
    let out = divide_by_pair_scales(tensor, &record.scales);
    (out, record)
}

fn divide_by_pair_scales(tensor: &SpectrumTensor, scales: &[f64]) -> SpectrumTensor {
    let (_, _, d, _) = tensor.dims();
    let mut out = tensor.clone();
    for ((_, i, j, _), v) in out.values.indexed_iter_mut() {
        *v /= scales[i * d + j];
    }
    out
}

pub fn normalize_source_energy(tensor: &SpectrumTensor) -> (SpectrumTensor, NormalizationRecord) {
    let (n, p, _, _) = tensor.dims();
    let mut out = tensor.clone();
    let mut degenerate = Vec::new();
    for k in 0..n {
        for i in 0..p {
            let mut slice = out.values.slice_mut(s![k, i, .., ..]);
            let energy = slice.iter().map(|v| v * v).sum::<f64>().sqrt();
            if energy > 0.0 {
                slice.mapv_inplace(|v| v / energy);
            } else {
                degenerate.push((k, i));
            }
        }
    }
    let record = NormalizationRecord {
        mode: NormalizationMode::SourceEnergy,
        scales: Vec::new(),
        degenerate,
        grid_len: tensor.grid.len(),
    };
    (out, record)
}

/// Replays a recorded normalization on new data: stored divisors for
/// max-amplitude, per-sample recomputation for source energy.
pub fn apply_normalization(
    tensor: &SpectrumTensor,
    record: &NormalizationRecord,
) -> Result<SpectrumTensor> {
    let (_, p, d, len) = tensor.dims();
    if len != record.grid_len {
        return Err(Error::DimensionMismatch(format!(
            "normalization statistics were computed on {} wavenumbers, data has {len}",
            record.grid_len
        )));
    }
    match record.mode {
        NormalizationMode::MaxAmplitude => {
            if record.scales.len() != p * d {
                return Err(Error::DimensionMismatch(format!(
                    "{} recorded scales for {p}×{d} source-detector pairs",
                    record.scales.len()
                )));
            }
            Ok(divide_by_pair_scales(tensor, &record.scales))
        }
        NormalizationMode::SourceEnergy => Ok(normalize_source_energy(tensor).0),
        NormalizationMode::None => Ok(tensor.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTransform {
    pub center: f64,
    pub scale: f64,
}

impl ResponseTransform {
    pub fn identity() -> Self {
        ResponseTransform {
            center: 0.0,
            scale: 1.0,
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.center) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

/// Centered response with max |y| = 1, plus the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector {
    pub values: Vec<f64>,
    pub transform: ResponseTransform,
}

impl ResponseVector {
    pub fn to_original(&self) -> Vec<f64> {
        self.values.iter().map(|&z| self.transform.inverse(z)).collect()
    }
}

pub fn normalize_response(raw: &[f64]) -> Result<ResponseVector> {
    if raw.len() < 2 {
        return Err(Error::Empty("response needs at least two samples".into()));
    }
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("response {pos}")));
    }
    let center = raw.iter().sum::<f64>() / raw.len() as f64;
    let scale = raw.iter().fold(0.0f64, |m, y| m.max((y - center).abs()));
    if !(scale > 0.0) {
        return Err(Error::Degenerate("response is constant".into()));
    }
    let transform = ResponseTransform { center, scale };
    Ok(ResponseVector {
        values: raw.iter().map(|&y| transform.forward(y)).collect(),
        transform,
    })
}
