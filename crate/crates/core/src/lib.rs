//! Sparse kernel representation of spectra followed by rank-one multilinear
//! regression of a scalar response on (sample, source, detector, wavenumber)
//! spectroscopy tensors.
//!
//! The pipeline is:
//!
//! 1. [`sparse_rep`] fits a nonnegative, ℓ1 and RKHS-norm regularized
//!    Lorentzian kernel expansion to every observed spectrum.
//! 2. [`selection`] scores wavenumbers by how often they carry weight, keeps
//!    the top `N`, and maps coefficients through the Gram matrix.
//! 3. [`preprocess`] normalizes the transformed tensor and the response.
//! 4. [`rank_one`] fits `y ≈ Σ α_i β_j γ_l x̃_ijl` by alternating convex
//!    block solves.
//!
//! [`eval`] and [`baselines`] provide the cross-validation harness and the
//! comparison predictors; [`synth`] generates data with a planted model.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod pipeline;
pub mod plot;
pub mod preprocess;
pub mod quad;
pub mod rank_one;
pub mod selection;
pub mod sparse_rep;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use kernel::{GramMatrix, GramMode, KernelFamily, KernelSpec, SpectralGrid};
pub use rank_one::{FitConfig, FitReport, RankOneData, RankOneModel, RegParams};
pub use sparse_rep::{SparseCoeffTensor, SparseRepFit, SparseRepParams};
pub use tensor::{SampleMeta, SpectrumTensor, TensorKind};
