use ndarray::{Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SpectralGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Raw,
    Coefficients,
    Xtilde,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    /// Stratum used for CV test draws (e.g. the measurement week).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Physical unit the sample was measured on (e.g. the animal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<f64>,
}

impl SampleMeta {
    pub fn numbered(k: usize) -> Self {
        SampleMeta {
            id: format!("s{k:03}"),
            ..Default::default()
        }
    }
}

/// 4-way array indexed `(sample k, source i, detector j, wavenumber l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTensor {
    pub values: Array4<f64>,
    pub grid: SpectralGrid,
    pub samples: Vec<SampleMeta>,
    pub kind: TensorKind,
    pub notes: Vec<String>,
}

impl SpectrumTensor {
    pub fn new(
        values: Array4<f64>,
        grid: SpectralGrid,
        samples: Vec<SampleMeta>,
        kind: TensorKind,
    ) -> Result<Self> {
        let t = SpectrumTensor {
            values,
            grid,
            samples,
            kind,
            notes: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, _, _, l) = self.values.dim();
        if l != self.grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor has {l} wavenumbers but grid has {}",
                self.grid.len()
            )));
        }
        if n != self.samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor has {n} samples but metadata lists {}",
                self.samples.len()
            )));
        }
        self.check_finite()
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some((idx, v)) = self.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "(sample {}, source {}, detector {}, wavenumber {}) = {v}",
                idx.0, idx.1, idx.2, idx.3
            )));
        }
        Ok(())
    }

    /// `(n, p, d, L)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.values.dim()
    }

    pub fn sample(&self, k: usize) -> ArrayView3<'_, f64> {
        self.values.index_axis(Axis(0), k)
    }

    /// Responses in sample order, if every sample carries one.
    pub fn responses(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.response).collect()
    }

    /// Copy keeping only the listed samples, in the given order.
    pub fn select_samples(&self, idx: &[usize]) -> SpectrumTensor {
        SpectrumTensor {
            values: self.values.select(Axis(0), idx),
            grid: self.grid.clone(),
            samples: idx.iter().map(|&k| self.samples[k].clone()).collect(),
            kind: self.kind,
            notes: self.notes.clone(),
        }
    }
}
