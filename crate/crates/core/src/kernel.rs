//! Kernel family, kernel matrices and the Gram matrix of kernel inner
//! products.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance on negative eigenvalues when certifying that a kernel
/// or Gram matrix is positive semi-definite.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Ordered wavenumber locations of the spectral axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpectralGrid {
    points: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if let Some(pos) = points.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("point {pos} is not finite")));
        }
        if let Some(pos) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing (index {} -> {})",
                pos,
                pos + 1
            )));
        }
        Ok(SpectralGrid { points })
    }

    /// `count` equally spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::InvalidGrid("grid has no points".into())),
            1 => SpectralGrid::new(vec![lo]),
            _ => {
                let step = (hi - lo) / (count - 1) as f64;
                SpectralGrid::new((0..count).map(|i| lo + step * i as f64).collect())
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn mean_spacing(&self) -> f64 {
        if self.len() < 2 {
            1.0
        } else {
            (self.max() - self.min()) / (self.len() - 1) as f64
        }
    }

    /// Grid restricted to `indices`, which must be sorted and in range.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or_else(|| {
                    Error::DimensionMismatch(format!("index {i} outside grid of {}", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SpectralGrid::new(points)
    }

    /// Index of the grid point closest to `t`; ties go to the lower index.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.points.partition_point(|&p| p < t);
        if pos == 0 {
            0
        } else if pos == self.points.len() {
            pos - 1
        } else if (t - self.points[pos - 1]) <= (self.points[pos] - t) {
            pos - 1
        } else {
            pos
        }
    }
}

impl TryFrom<Vec<f64>> for SpectralGrid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        SpectralGrid::new(points)
    }
}

impl From<SpectralGrid> for Vec<f64> {
    fn from(grid: SpectralGrid) -> Self {
        grid.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub width: f64,
}

impl KernelSpec {
    pub fn lorentzian(width: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: KernelFamily::Lorentzian,
            width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width > 0.0 && self.width.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel width must be positive, got {}",
                self.width
            )))
        }
    }

    #[inline]
    pub fn value(&self, t: f64, s: f64) -> f64 {
        match self.family {
            KernelFamily::Lorentzian => {
                let r = (t - s) / self.width;
                1.0 / (1.0 + r * r)
            }
        }
    }

    /// L²(ℝ) inner product of the kernels anchored at `a` and `b`.
    #[inline]
    pub fn gram_value(&self, a: f64, b: f64) -> f64 {
        match self.family {
            // Two Lorentzians of width W convolve to one of width 2W.
            KernelFamily::Lorentzian => {
                let r = (a - b) / (2.0 * self.width);
                0.5 * std::f64::consts::PI * self.width / (1.0 + r * r)
            }
        }
    }
}

pub fn kernel_value(spec: &KernelSpec, t: f64, s: f64) -> f64 {
    spec.value(t, s)
}

/// `K[l', l] = k(t_l', t_l)` over the grid, certified PSD.
pub fn kernel_matrix(spec: &KernelSpec, grid: &SpectralGrid) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let t = grid.points();
    let n = t.len();
    let k = DMatrix::from_fn(n, n, |a, b| spec.value(t[a], t[b]));
    check_psd(&k)?;
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GramMode {
    ClosedFormRealLine,
    QuadratureInterval { lo: f64, hi: f64 },
}

impl Default for GramMode {
    fn default() -> Self {
        GramMode::ClosedFormRealLine
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub mode: GramMode,
}

const QUAD_REL_TOL: f64 = 1e-11;
const QUAD_MAX_INTERVALS: usize = 4000;

pub fn gram_matrix(spec: &KernelSpec, grid: &SpectralGrid, mode: GramMode) -> Result<GramMatrix> {
    spec.validate()?;
    let t = grid.points();
    let n = t.len();
    let entries = match mode {
        GramMode::ClosedFormRealLine => DMatrix::from_fn(n, n, |a, b| spec.gram_value(t[a], t[b])),
        GramMode::QuadratureInterval { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "quadrature interval [{lo}, {hi}] is empty"
                )));
            }
            let mut m = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let (ta, tb) = (t[a], t[b]);
                    let v = gram_quadrature(spec, ta, tb, lo, hi)?;
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
            m
        }
    };
    check_psd(&entries)?;
    Ok(GramMatrix { entries, mode })
}

/// ∫_lo^hi k(t, a) k(t, b) dt by adaptive quadrature, with breakpoints at the
/// two kernel centres so the peaks are never straddled by a single panel.
pub fn gram_quadrature(spec: &KernelSpec, a: f64, b: f64, lo: f64, hi: f64) -> Result<f64> {
    let f = |t: f64| spec.value(t, a) * spec.value(t, b);
    let mut cuts = vec![lo, hi];
    for c in [a, b] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += quad::integrate(f, w[0], w[1], QUAD_REL_TOL, 0.0, QUAD_MAX_INTERVALS)?.value;
    }
    Ok(total)
}

pub(crate) fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_REL_TOL * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eigen: min,
            max_eigen: max,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_value_cases() {
        let w1 = KernelSpec::lorentzian(1.0).unwrap();
        let w2 = KernelSpec::lorentzian(2.0).unwrap();
        assert_eq!(kernel_value(&w1, 5.0, 5.0), 1.0);
        assert_eq!(kernel_value(&w1, 0.0, 1.0), 0.5);
        assert_eq!(kernel_value(&w2, 0.0, 2.0), 0.5);
    }

    #[test]
    fn width_must_be_positive() {
        assert!(KernelSpec::lorentzian(0.0).is_err());
        assert!(KernelSpec::lorentzian(-1.0).is_err());
        assert!(KernelSpec::lorentzian(f64::NAN).is_err());
    }

    #[test]
    fn kernel_matrix_small_cases() {
        let spec = KernelSpec::lorentzian(1.0).unwrap();
        let one = kernel_matrix(&spec, &SpectralGrid::new(vec![3.0]).unwrap()).unwrap();
        assert_eq!(one, DMatrix::from_element(1, 1, 1.0));
        let two = kernel_matrix(&spec, &SpectralGrid::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(two, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn widely_separated_grid_is_near_identity() {
        let spec = KernelSpec::lorentzian(0.5).unwrap();
        let grid = SpectralGrid::uniform(0.0, 500.0, 11).unwrap();
        let k = kernel_matrix(&spec, &grid).unwrap();
        for a in 0..11 {
            for b in 0..11 {
                if a != b {
                    assert!(k[(a, b)] <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn gram_closed_form_values() {
        // Frozen from the quadrature oracle below (±200W window, W = 1).
        let spec = KernelSpec::lorentzian(1.0).unwrap();
        assert!((spec.gram_value(0.0, 0.0) - PI / 2.0).abs() < 1e-15);
        assert!((spec.gram_value(0.0, 2.0) - PI / 4.0).abs() < 1e-15);
        let q0 = gram_quadrature(&spec, 0.0, 0.0, -200.0, 200.0).unwrap();
        let q2 = gram_quadrature(&spec, 0.0, 2.0, -200.0, 202.0).unwrap();
        // The ±200W truncation drops O(1/200³) of tail mass.
        assert!((q0 - 1.570_796).abs() < 1e-5, "{q0}");
        assert!((q2 - 0.785_398).abs() < 1e-5, "{q2}");
    }

    #[test]
    fn gram_decays_monotonically() {
        let spec = KernelSpec::lorentzian(3.0).unwrap();
        let vals: Vec<f64> = (0..50).map(|d| spec.gram_value(0.0, d as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(spec.gram_value(0.0, 1e6) < 1e-4);
    }

    #[test]
    fn grid_validation_and_lookup() {
        assert!(SpectralGrid::new(vec![]).is_err());
        assert!(SpectralGrid::new(vec![1.0, 1.0]).is_err());
        assert!(SpectralGrid::new(vec![2.0, 1.0]).is_err());
        let g = SpectralGrid::uniform(954.0, 1700.0, 544).unwrap();
        assert_eq!(g.len(), 544);
        assert_eq!(g.min(), 954.0);
        assert!((g.max() - 1700.0).abs() < 1e-9);
        assert_eq!(g.nearest_index(954.0), 0);
        assert_eq!(g.nearest_index(10_000.0), 543);
        let h = SpectralGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.nearest_index(0.5), 0);
        assert_eq!(h.nearest_index(0.51), 1);
    }

    #[test]
    fn quadrature_gram_matrix_matches_closed_form() {
        let spec = KernelSpec::lorentzian(2.0).unwrap();
        let grid = SpectralGrid::new(vec![0.0, 1.5, 4.0]).unwrap();
        let cf = gram_matrix(&spec, &grid, GramMode::ClosedFormRealLine).unwrap();
        let q = gram_matrix(
            &spec,
            &grid,
            GramMode::QuadratureInterval {
                lo: -400.0,
                hi: 404.0,
            },
        )
        .unwrap();
        for (a, b) in cf.entries.iter().zip(q.entries.iter()) {
            assert!(((a - b) / a).abs() < 1e-4);
        }
        assert!(gram_matrix(&spec, &grid, GramMode::QuadratureInterval { lo: 1.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn non_psd_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&m), Err(Error::NotPsd { .. })));
    }
}
