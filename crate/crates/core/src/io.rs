//! Tensor files, manifests and model persistence.
//!
//! A tensor is stored as a JSON manifest plus a CSV data file in long
//! format, one row per entry:
//!
//! ```text
//! sample,source,detector,wavenumber_index,value
//! 0,0,0,0,1.2500000000000000e0
//! ```
//!
//! Every write goes to a temporary file in the target directory and is then
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{MeanPredictor, RatioRegressionModel};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SpectralGrid};
use crate::pipeline::PipelineState;
use crate::preprocess::{NormalizationRecord, ResponseTransform};
use crate::rank_one::{FitReport, RankOneModel, RegParams};
use crate::sparse_rep::SparseRepParams;
use crate::tensor::{SampleMeta, SpectrumTensor, TensorKind};

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 5] = ["sample", "source", "detector", "wavenumber_index", "value"];

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::format(
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: TensorKind,
    /// `[n, p, d, N]`.
    pub dims: [usize; 4],
    pub grid: Vec<f64>,
    /// Data file name, relative to the manifest's directory.
    pub data_file: String,
    #[serde(default)]
    pub samples: Vec<SampleMeta>,
    #[serde(default)]
    pub normalization: Option<NormalizationRecord>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub sparse: Option<SparseRepParams>,
    /// How covariates were derived, for x̃ tensors.
    #[serde(default)]
    pub pipeline: Option<PipelineState>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DatasetManifest {
    pub fn describe(tensor: &SpectrumTensor, data_file: impl Into<String>) -> Self {
        let (n, p, d, len) = tensor.dims();
        DatasetManifest {
            format_version: FORMAT_VERSION,
            kind: tensor.kind,
            dims: [n, p, d, len],
            grid: tensor.grid.points().to_vec(),
            data_file: data_file.into(),
            samples: tensor.samples.clone(),
            normalization: None,
            kernel: None,
            sparse: None,
            pipeline: None,
            notes: tensor.notes.clone(),
        }
    }
}

/// `out/name.json` → `name.csv`.
pub fn data_file_for(manifest_path: &Path) -> String {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tensor".into());
    format!("{stem}.csv")
}

pub fn tensor_csv(values: &Array4<f64>) -> String {
    let mut out = String::with_capacity(values.len() * 40 + 64);
    out += &CSV_HEADER.join(",");
    out.push('\n');
    for ((k, i, j, l), v) in values.indexed_iter() {
        out += &format!("{k},{i},{j},{l},{v:.16e}\n");
    }
    out
}

/// Writes the data file and then the manifest; `manifest` supplies the
/// optional fields and is completed from `tensor`.
pub fn write_tensor(path: &Path, tensor: &SpectrumTensor, mut manifest: DatasetManifest) -> Result<DatasetManifest> {
    tensor.validate()?;
    let fresh = DatasetManifest::describe(tensor, data_file_for(path));
    manifest.format_version = fresh.format_version;
    manifest.kind = fresh.kind;
    manifest.dims = fresh.dims;
    manifest.grid = fresh.grid;
    manifest.data_file = fresh.data_file;
    manifest.samples = fresh.samples;
    manifest.notes = fresh.notes;
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    atomic_write(&dir.join(&manifest.data_file), tensor_csv(&tensor.values).as_bytes())?;
    write_json(path, &manifest)?;
    Ok(manifest)
}

pub fn read_tensor(path: &Path) -> Result<(SpectrumTensor, DatasetManifest)> {
    let manifest: DatasetManifest = read_json(path)?;
    let loc = path.display().to_string();
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            format!("{loc}: format_version"),
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    let [n, p, d, len] = manifest.dims;
    if manifest.grid.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{loc}: dims list {len} wavenumbers but the grid has {}",
            manifest.grid.len()
        )));
    }
    let grid = SpectralGrid::new(manifest.grid.clone())
        .map_err(|e| Error::format(format!("{loc}: grid"), e.to_string()))?;
    let samples = if manifest.samples.is_empty() {
        (0..n).map(SampleMeta::numbered).collect()
    } else if manifest.samples.len() == n {
        manifest.samples.clone()
    } else {
        return Err(Error::DimensionMismatch(format!(
            "{loc}: dims list {n} samples but metadata has {}",
            manifest.samples.len()
        )));
    };
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let values = read_values(&dir.join(&manifest.data_file), [n, p, d, len])?;
    let mut tensor = SpectrumTensor::new(values, grid, samples, manifest.kind)?;
    tensor.notes = manifest.notes.clone();
    Ok((tensor, manifest))
}

/// Reads the long-format CSV in any row order; every entry must appear
/// exactly once.
pub fn read_values(path: &Path, dims: [usize; 4]) -> Result<Array4<f64>> {
    let [n, p, d, len] = dims;
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::format(
            format!("{file}:1"),
            format!("expected header {}, found {}", CSV_HEADER.join(","), header.join(",")),
        ));
    }
    let mut values = Array4::<f64>::zeros((n, p, d, len));
    let mut seen = Array4::<bool>::from_elem((n, p, d, len), false);
    let bounds = [n, p, d, len];
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 5 {
            return Err(Error::format(
                format!("{file}:{line}"),
                format!("expected 5 fields, found {}", rec.len()),
            ));
        }
        let mut idx = [0usize; 4];
        for (f, slot) in idx.iter_mut().enumerate() {
            *slot = rec[f].parse().map_err(|_| {
                Error::format(
                    format!("{file}:{line}: {}", CSV_HEADER[f]),
                    format!("'{}' is not a nonnegative integer", &rec[f]),
                )
            })?;
            if *slot >= bounds[f] {
                return Err(Error::format(
                    format!("{file}:{line}: {}", CSV_HEADER[f]),
                    format!("index {} out of range 0..{}", slot, bounds[f]),
                ));
            }
        }
        let v: f64 = rec[4].parse().map_err(|_| {
            Error::format(format!("{file}:{line}: value"), format!("'{}' is not a number", &rec[4]))
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{file}:{line}: value")));
        }
        let at = (idx[0], idx[1], idx[2], idx[3]);
        if std::mem::replace(&mut seen[at], true) {
            return Err(Error::format(
                format!("{file}:{line}"),
                format!("duplicate entry for {:?}", idx),
            ));
        }
        values[at] = v;
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        let ((k, i, j, l), _) = seen.indexed_iter().find(|(_, s)| !**s).unwrap();
        return Err(Error::DimensionMismatch(format!(
            "{file}: {missing} entries missing, first in slice (sample {k}, source {i}, detector {j}) at wavenumber index {l}"
        )));
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RankOne,
    Ratio,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub zero_model: bool,
    pub rejected_updates: usize,
    pub subproblems_converged: bool,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        FitSummary {
            objective: r.final_objective(),
            sweeps: r.sweeps,
            converged: r.converged,
            zero_model: r.zero_model,
            rejected_updates: r.rejected_updates,
            subproblems_converged: r.subproblems_converged,
        }
    }
}

/// A fitted predictor with what it needs to score new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub kind: ModelKind,
    #[serde(default)]
    pub rank_one: Option<RankOneModel>,
    #[serde(default)]
    pub ratio: Option<RatioRegressionModel>,
    #[serde(default)]
    pub mean: Option<MeanPredictor>,
    #[serde(default)]
    pub params: Option<RegParams>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub kept_wavenumbers: Vec<f64>,
    /// Replays preparation for raw or coefficient inputs.
    #[serde(default)]
    pub pipeline: Option<PipelineState>,
    #[serde(default)]
    pub sparse: Option<SparseRepParams>,
    pub response_transform: ResponseTransform,
    #[serde(default)]
    pub fit: Option<FitSummary>,
    /// Predictions on the training samples, original response units.
    #[serde(default)]
    pub training_predictions: Vec<f64>,
    #[serde(default)]
    pub training_responses: Vec<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ModelManifest {
    pub fn new(kind: ModelKind, response_transform: ResponseTransform) -> Self {
        ModelManifest {
            format_version: FORMAT_VERSION,
            kind,
            rank_one: None,
            ratio: None,
            mean: None,
            params: None,
            kernel: None,
            kept_wavenumbers: Vec::new(),
            pipeline: None,
            sparse: None,
            response_transform,
            fit: None,
            training_predictions: Vec::new(),
            training_responses: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ModelKind::RankOne => self.rank_one.is_some(),
            ModelKind::Ratio => self.ratio.is_some() && self.kernel.is_some(),
            ModelKind::Mean => self.mean.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::format("model manifest", format!("missing parameters for a {:?} model", self.kind)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tensor() -> SpectrumTensor {
        let v = Array4::from_shape_fn((3, 2, 2, 4), |(k, i, j, l)| {
            ((k * 31 + i * 7 + j * 3 + l) as f64).sin() * 10f64.powi(l as i32 - 2) + 1.0 / 3.0
        });
        let mut s: Vec<_> = (0..3).map(SampleMeta::numbered).collect();
        s[1].group = Some("week6".into());
        s[2].response = Some(-0.125);
        SpectrumTensor::new(v, SpectralGrid::new(vec![1.0, 2.5, 4.0, 9.0]).unwrap(), s, TensorKind::Raw).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = sample_tensor();
        write_tensor(&path, &t, DatasetManifest::describe(&t, "")).unwrap();
        let (back, m) = read_tensor(&path).unwrap();
        assert_eq!(back.values, t.values);
        assert_eq!(back.samples, t.samples);
        assert_eq!(m.data_file, "t.csv");
        assert!(dir.path().join("t.csv").exists());
    }

    #[test]
    fn unsorted_rows_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = sample_tensor();
        write_tensor(&path, &t, DatasetManifest::describe(&t, "")).unwrap();
        let csv_path = dir.path().join("t.csv");
        let text = fs::read_to_string(&csv_path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        fs::write(&csv_path, lines.join("\n")).unwrap();
        assert_eq!(read_tensor(&path).unwrap().0.values, t.values);
    }

    #[test]
    fn missing_row_names_the_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = sample_tensor();
        write_tensor(&path, &t, DatasetManifest::describe(&t, "")).unwrap();
        let csv_path = dir.path().join("t.csv");
        let text = fs::read_to_string(&csv_path).unwrap();
        let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("1,1,0,2,")).collect();
        fs::write(&csv_path, kept.join("\n")).unwrap();
        let err = read_tensor(&path).unwrap_err().to_string();
        assert!(err.contains("sample 1, source 1, detector 0"), "{err}");
    }

    #[test]
    fn bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = sample_tensor();
        write_tensor(&path, &t, DatasetManifest::describe(&t, "")).unwrap();
        let csv_path = dir.path().join("t.csv");
        let text = fs::read_to_string(&csv_path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[3] = "0,0,0,2,abc".into();
        fs::write(&csv_path, lines.join("\n")).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(err.to_string().contains("t.csv:4: value"), "{err}");
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
