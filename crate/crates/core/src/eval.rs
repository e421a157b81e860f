//! Cross-validation batches, error metrics, fixed and adaptive
//! regularization policies, outlier screening and band summaries.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{MeanPredictor, RatioRegressionModel};
use crate::error::{Error, Result};
use crate::rank_one::{fit_alternating, FitConfig, RankOneData, RegParams};
use crate::tensor::SampleMeta;

pub const DEFAULT_BATCHES: usize = 50;
pub const DEFAULT_OUTLIER_C: f64 = 3.0;
pub const DEFAULT_BANDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvBatch {
    pub id: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSpec {
    /// This many test samples from every group.
    PerGroup(usize),
    /// This many test samples drawn uniformly.
    Total(usize),
}

impl TestSpec {
    /// Stratify when every sample has a group, otherwise draw `total`
    /// uniformly.
    pub fn auto(samples: &[SampleMeta], per_group: usize, total: usize) -> TestSpec {
        if !samples.is_empty() && samples.iter().all(|s| s.group.is_some()) {
            TestSpec::PerGroup(per_group)
        } else {
            TestSpec::Total(total)
        }
    }
}

fn batch_seed(seed: u64, id: usize) -> u64 {
    // splitmix64 step so neighbouring ids get unrelated streams
    let mut z = seed.wrapping_add((id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random train/test splits. With `group_exclusive`, samples sharing a
/// `unit` always land on the same side.
pub fn make_cv_batches(
    samples: &[SampleMeta],
    n_batches: usize,
    spec: TestSpec,
    group_exclusive: bool,
    seed: u64,
) -> Result<Vec<CvBatch>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Empty("cross-validation needs at least two samples".into()));
    }
    if n_batches == 0 {
        return Err(Error::InvalidParameter("number of batches must be positive".into()));
    }
    // units: each sample is its own unit unless exclusivity is requested
    let mut units: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, s) in samples.iter().enumerate() {
        let key = match (&s.unit, group_exclusive) {
            (Some(u), true) => format!("u:{u}"),
            _ => format!("s:{k:010}"),
        };
        units.entry(key).or_default().push(k);
    }
    let units: Vec<Vec<usize>> = units.into_values().collect();

    let quota: BTreeMap<Option<&str>, usize> = match spec {
        TestSpec::PerGroup(c) => {
            if c == 0 {
                return Err(Error::InvalidParameter("per-group test count must be positive".into()));
            }
            let mut sizes: BTreeMap<Option<&str>, usize> = BTreeMap::new();
            for s in samples {
                let g = s.group.as_deref().ok_or_else(|| {
                    Error::Infeasible(format!("sample {} has no group for stratification", s.id))
                })?;
                *sizes.entry(Some(g)).or_default() += 1;
            }
            for (g, size) in &sizes {
                if *size <= c {
                    return Err(Error::Infeasible(format!(
                        "group {} has {size} samples, cannot hold out {c} and still train",
                        g.unwrap_or("?")
                    )));
                }
            }
            sizes.into_keys().map(|g| (g, c)).collect()
        }
        TestSpec::Total(m) => {
            if m == 0 || m >= n {
                return Err(Error::Infeasible(format!("cannot hold out {m} of {n} samples")));
            }
            [(None, m)].into_iter().collect()
        }
    };
    let group_of = |k: usize| -> Option<&str> {
        match spec {
            TestSpec::PerGroup(_) => samples[k].group.as_deref(),
            TestSpec::Total(_) => None,
        }
    };

    const ATTEMPTS: usize = 200;
    let mut batches = Vec::with_capacity(n_batches);
    for id in 0..n_batches {
        let bseed = batch_seed(seed, id);
        let mut rng = ChaCha8Rng::seed_from_u64(bseed);
        let mut found = None;
        for _ in 0..ATTEMPTS {
            let mut order: Vec<usize> = (0..units.len()).collect();
            order.shuffle(&mut rng);
            let mut taken: BTreeMap<Option<&str>, usize> = quota.keys().map(|g| (*g, 0)).collect();
            let mut test = Vec::new();
            for u in order {
                let mut add: BTreeMap<Option<&str>, usize> = BTreeMap::new();
                for &k in &units[u] {
                    *add.entry(group_of(k)).or_default() += 1;
                }
                if add.iter().all(|(g, a)| taken[g] + a <= quota[g]) {
                    for (g, a) in add {
                        *taken.get_mut(&g).unwrap() += a;
                    }
                    test.extend_from_slice(&units[u]);
                }
                if taken == quota {
                    break;
                }
            }
            if taken == quota {
                found = Some(test);
                break;
            }
        }
        let mut test = found.ok_or_else(|| {
            Error::Infeasible("could not draw a test set matching the requested counts".into())
        })?;
        test.sort_unstable();
        let held: BTreeSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..n).filter(|k| !held.contains(k)).collect();
        batches.push(CvBatch {
            id,
            train,
            test,
            seed: bseed,
        });
    }
    Ok(batches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    MedianAd,
    MeanAd,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::MedianAd => "median absolute deviation",
            Metric::MeanAd => "mean absolute deviation",
        }
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn error_metric(pred: &[f64], actual: &[f64], metric: Metric) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} observations",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("error metric of no predictions".into()));
    }
    let dev: Vec<f64> = pred.iter().zip(actual).map(|(a, b)| (a - b).abs()).collect();
    Ok(match metric {
        Metric::MedianAd => median(&dev).unwrap(),
        Metric::MeanAd => dev.iter().sum::<f64>() / dev.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub points: Vec<RegParams>,
}

impl Default for ParamGrid {
    /// 10^{-4..1}, five values, with κ_α = κ_β and κ_γ = κ_Γ: 25 points.
    fn default() -> Self {
        ParamGrid::tied(&log_values(-4.0, 1.0, 5), &log_values(-4.0, 1.0, 5))
    }
}

pub fn log_values(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

impl ParamGrid {
    pub fn single(p: RegParams) -> Self {
        ParamGrid { points: vec![p] }
    }

    /// Product grid with κ_α = κ_β from `ab` and κ_γ = κ_Γ from `gg`.
    pub fn tied(ab: &[f64], gg: &[f64]) -> Self {
        let points = ab
            .iter()
            .flat_map(|&a| {
                gg.iter().map(move |&g| RegParams {
                    kappa_alpha: a,
                    kappa_beta: a,
                    kappa_gamma: g,
                    kappa_gram: g,
                })
            })
            .collect();
        ParamGrid { points }
    }

    /// Full four-way product.
    pub fn full(a: &[f64], b: &[f64], g: &[f64], gram: &[f64]) -> Self {
        let mut points = Vec::new();
        for &ka in a {
            for &kb in b {
                for &kg in g {
                    for &kr in gram {
                        points.push(RegParams {
                            kappa_alpha: ka,
                            kappa_beta: kb,
                            kappa_gamma: kg,
                            kappa_gram: kr,
                        });
                    }
                }
            }
        }
        ParamGrid { points }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidParameter("parameter grid is empty".into()));
        }
        self.points.iter().try_for_each(|p| p.validate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOptions {
    pub metric: Metric,
    pub fit: FitConfig,
    /// Per-sample ratio covariates; enables the ratio baseline.
    pub ratio: Option<Vec<Option<f64>>>,
    pub ratio_peaks: (f64, f64),
    pub ratio_intercept: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            metric: Metric::default(),
            fit: FitConfig::default(),
            ratio: None,
            ratio_peaks: (crate::baselines::DEFAULT_PEAK_NUM, crate::baselines::DEFAULT_PEAK_DEN),
            ratio_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Cell {
    train_error: f64,
    test_error: f64,
    test_pred: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

/// Fits of every grid point on every batch; both policies read from it.
#[derive(Debug, Clone)]
pub struct CvTable {
    grid: ParamGrid,
    batches: Vec<CvBatch>,
    cells: Vec<Vec<Option<Cell>>>,
    failures: Vec<String>,
    baselines: Vec<BaselineErrors>,
    response: Vec<f64>,
    metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineErrors {
    pub mean_train: f64,
    pub mean_test: f64,
    pub mean_pred: Vec<f64>,
    pub ratio_train: Option<f64>,
    pub ratio_test: Option<f64>,
    pub ratio_pred: Option<Vec<f64>>,
}

fn check_batches(batches: &[CvBatch], n: usize) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::Empty("no CV batches".into()));
    }
    for b in batches {
        let mut seen = BTreeSet::new();
        if b.test.is_empty() || b.train.is_empty() {
            return Err(Error::InvalidParameter(format!("batch {} has an empty side", b.id)));
        }
        for &k in b.train.iter().chain(&b.test) {
            if k >= n || !seen.insert(k) {
                return Err(Error::InvalidParameter(format!(
                    "batch {} has an out-of-range or repeated sample {k}",
                    b.id
                )));
            }
        }
    }
    Ok(())
}

impl CvTable {
    pub fn build(data: &RankOneData, grid: &ParamGrid, batches: &[CvBatch], opts: &CvOptions) -> Result<Self> {
        grid.validate()?;
        let n = data.dims().0;
        check_batches(batches, n)?;
        if let Some(r) = &opts.ratio {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!("{} ratio covariates for {n} samples", r.len())));
            }
        }
        let y = &data.response;
        let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&k| y[k]).collect() };

        let jobs: Vec<(usize, usize)> = (0..grid.points.len())
            .flat_map(|g| (0..batches.len()).map(move |b| (g, b)))
            .collect();
        let run = |&(g, b): &(usize, usize)| -> Result<Cell> {
            let batch = &batches[b];
            let train = data.subset(&batch.train);
            let test = data.subset(&batch.test);
            let (model, _) = fit_alternating(&train, &grid.points[g], &opts.fit)?;
            let train_pred = model.predict_all(&train.xtilde)?;
            let test_pred = model.predict_all(&test.xtilde)?;
            Ok(Cell {
                train_error: error_metric(&train_pred, &train.response, opts.metric)?,
                test_error: error_metric(&test_pred, &test.response, opts.metric)?,
                test_pred,
                alpha: model.alpha,
                beta: model.beta,
            })
        };

        #[cfg(feature = "parallel")]
        let results: Vec<Result<Cell>> = {
            use rayon::prelude::*;
            jobs.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Cell>> = jobs.iter().map(run).collect();

        let mut cells = vec![vec![None; batches.len()]; grid.points.len()];
        let mut failures = Vec::new();
        for (&(g, b), r) in jobs.iter().zip(results) {
            match r {
                Ok(c) => cells[g][b] = Some(c),
                Err(e) => failures.push(format!("grid point {g}, batch {}: {e}", batches[b].id)),
            }
        }

        let mut baselines = Vec::with_capacity(batches.len());
        for batch in batches {
            let ytr = pick(&batch.train);
            let yte = pick(&batch.test);
            let mean = MeanPredictor::fit(&ytr)?;
            let mean_pred = vec![mean.predict(); yte.len()];
            let mean_train = error_metric(&vec![mean.predict(); ytr.len()], &ytr, opts.metric)?;
            let mean_test = error_metric(&mean_pred, &yte, opts.metric)?;
            let (mut ratio_train, mut ratio_test, mut ratio_pred) = (None, None, None);
            if let Some(cov) = &opts.ratio {
                let ctr: Vec<Option<f64>> = batch.train.iter().map(|&k| cov[k]).collect();
                let m = RatioRegressionModel::fit(&ctr, &ytr, opts.ratio_peaks.0, opts.ratio_peaks.1, opts.ratio_intercept)?;
                let ptr: Vec<f64> = ctr.iter().map(|c| m.predict(*c)).collect();
                let pte: Vec<f64> = batch.test.iter().map(|&k| m.predict(cov[k])).collect();
                ratio_train = Some(error_metric(&ptr, &ytr, opts.metric)?);
                ratio_test = Some(error_metric(&pte, &yte, opts.metric)?);
                ratio_pred = Some(pte);
            }
            baselines.push(BaselineErrors {
                mean_train,
                mean_test,
                mean_pred,
                ratio_train,
                ratio_test,
                ratio_pred,
            });
        }

        Ok(CvTable {
            grid: grid.clone(),
            batches: batches.to_vec(),
            cells,
            failures,
            baselines,
            response: y.clone(),
            metric: opts.metric,
        })
    }

    /// Index of the grid point with the smallest `key`, ties going to the
    /// lexicographically smallest κ vector.
    fn argmin(&self, key: impl Fn(usize) -> Option<f64>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..self.grid.points.len() {
            let Some(v) = key(g) else { continue };
            best = match best {
                None => Some((g, v)),
                Some((bg, bv)) => {
                    let better = v < bv
                        || (v == bv && self.grid.points[g].lex_cmp(&self.grid.points[bg]).is_lt());
                    Some(if better { (g, v) } else { (bg, bv) })
                }
            };
        }
        best.map(|(g, _)| g)
    }

    /// Mean test error of a grid point over the batches where it fitted.
    pub fn mean_test_error(&self, g: usize) -> Option<f64> {
        let errs: Vec<f64> = self.cells[g].iter().flatten().map(|c| c.test_error).collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    pub fn report(&self, policy: Policy) -> CvReport {
        let fixed = self.argmin(|g| self.mean_test_error(g));
        let mut rows = Vec::with_capacity(self.batches.len());
        let mut predictions = Vec::new();
        for (b, batch) in self.batches.iter().enumerate() {
            let chosen = match policy {
                Policy::Fixed => fixed.filter(|&g| self.cells[g][b].is_some()),
                Policy::Adaptive => self.argmin(|g| self.cells[g][b].as_ref().map(|c| c.test_error)),
            };
            let cell = chosen.and_then(|g| self.cells[g][b].as_ref());
            let base = &self.baselines[b];
            for (t, &k) in batch.test.iter().enumerate() {
                predictions.push(PredictionRow {
                    batch: batch.id,
                    sample: k,
                    actual: self.response[k],
                    model: cell.map(|c| c.test_pred[t]),
                    mean: base.mean_pred[t],
                    ratio: base.ratio_pred.as_ref().map(|p| p[t]),
                });
            }
            rows.push(BatchResult {
                batch: batch.id,
                train_size: batch.train.len(),
                test_size: batch.test.len(),
                params: chosen.map(|g| self.grid.points[g]),
                grid_index: chosen,
                model_train: cell.map(|c| c.train_error),
                model_test: cell.map(|c| c.test_error),
                mean_train: base.mean_train,
                mean_test: base.mean_test,
                ratio_train: base.ratio_train,
                ratio_test: base.ratio_test,
                alpha: cell.map(|c| c.alpha.clone()),
                beta: cell.map(|c| c.beta.clone()),
            });
        }

        let model: Vec<f64> = rows.iter().filter_map(|r| r.model_test).collect();
        let mean: Vec<f64> = rows.iter().map(|r| r.mean_test).collect();
        let ratio: Vec<f64> = rows.iter().filter_map(|r| r.ratio_test).collect();
        let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let beats = rows
            .iter()
            .filter(|r| r.model_test.is_some_and(|e| e < r.mean_test))
            .count();
        let mut warnings = self.failures.clone();
        if policy == Policy::Adaptive {
            warnings.push(format!(
                "adaptive errors use the test set to choose parameters and are optimistic; \
                 the model beats the mean predictor on {beats} of {} batches",
                rows.len()
            ));
        }
        CvReport {
            policy,
            metric: self.metric,
            metric_label: self.metric.label().to_string(),
            grid: self.grid.points.clone(),
            selected: match policy {
                Policy::Fixed => fixed.map(|g| self.grid.points[g]),
                Policy::Adaptive => None,
            },
            grid_mean_test: (0..self.grid.points.len()).map(|g| self.mean_test_error(g)).collect(),
            summary: CvSummary {
                model_mean_test: avg(&model),
                model_median_test: median(&model),
                mean_mean_test: avg(&mean).unwrap_or(0.0),
                mean_median_test: median(&mean).unwrap_or(0.0),
                ratio_mean_test: avg(&ratio),
                ratio_median_test: median(&ratio),
                batches_beating_mean: beats,
                failed_fits: self.failures.len(),
            },
            batches: rows,
            predictions,
            warnings,
        }
    }
}

pub fn run_cv(
    data: &RankOneData,
    grid: &ParamGrid,
    batches: &[CvBatch],
    policy: Policy,
    opts: &CvOptions,
) -> Result<CvReport> {
    Ok(CvTable::build(data, grid, batches, opts)?.report(policy))
}

pub fn run_cv_fixed(data: &RankOneData, grid: &ParamGrid, batches: &[CvBatch], opts: &CvOptions) -> Result<CvReport> {
    run_cv(data, grid, batches, Policy::Fixed, opts)
}

pub fn run_cv_adaptive(data: &RankOneData, grid: &ParamGrid, batches: &[CvBatch], opts: &CvOptions) -> Result<CvReport> {
    run_cv(data, grid, batches, Policy::Adaptive, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub params: Option<RegParams>,
    pub grid_index: Option<usize>,
    pub model_train: Option<f64>,
    pub model_test: Option<f64>,
    pub mean_train: f64,
    pub mean_test: f64,
    pub ratio_train: Option<f64>,
    pub ratio_test: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub batch: usize,
    pub sample: usize,
    pub actual: f64,
    pub model: Option<f64>,
    pub mean: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub model_mean_test: Option<f64>,
    pub model_median_test: Option<f64>,
    pub mean_mean_test: f64,
    pub mean_median_test: f64,
    pub ratio_mean_test: Option<f64>,
    pub ratio_median_test: Option<f64>,
    pub batches_beating_mean: usize,
    pub failed_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub policy: Policy,
    pub metric: Metric,
    pub metric_label: String,
    pub grid: Vec<RegParams>,
    pub selected: Option<RegParams>,
    pub grid_mean_test: Vec<Option<f64>>,
    pub summary: CvSummary,
    pub batches: Vec<BatchResult>,
    pub predictions: Vec<PredictionRow>,
    pub warnings: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl CvReport {
    /// One row per batch and method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch,method,train_error,test_error,kappa_alpha,kappa_beta,kappa_gamma,kappa_gram\n");
        for r in &self.batches {
            let k = r
                .params
                .map(|p| {
                    p.as_array()
                        .iter()
                        .map(|v| format!("{v:.16e}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .unwrap_or_else(|| ",,,".into());
            out += &format!("{},model,{},{},{k}\n", r.batch, opt(r.model_train), opt(r.model_test));
            out += &format!("{},mean,{:.16e},{:.16e},,,,\n", r.batch, r.mean_train, r.mean_test);
            if r.ratio_test.is_some() {
                out += &format!("{},ratio,{},{},,,,\n", r.batch, opt(r.ratio_train), opt(r.ratio_test));
            }
        }
        out
    }

    /// Mean absolute model error of each sample over the batches where it
    /// was held out; `None` for samples never tested.
    pub fn per_sample_errors(&self, n: usize) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for p in &self.predictions {
            if let (Some(m), true) = (p.model, p.sample < n) {
                sum[p.sample] += (m - p.actual).abs();
                count[p.sample] += 1;
            }
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub excluded: Vec<usize>,
    pub threshold: f64,
    pub median: f64,
    pub iqr: f64,
    pub c: f64,
}

/// Flags samples whose error exceeds `median + c·IQR`.
pub fn screen_outliers(errors: &[f64], c: f64) -> Result<OutlierReport> {
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("per-sample errors".into()));
    }
    let Some(med) = median(errors) else {
        return Ok(OutlierReport {
            excluded: Vec::new(),
            threshold: 0.0,
            median: 0.0,
            iqr: 0.0,
            c,
        });
    };
    let iqr = quantile(errors, 0.75).unwrap() - quantile(errors, 0.25).unwrap();
    let threshold = med + c * iqr;
    Ok(OutlierReport {
        excluded: (0..errors.len()).filter(|&k| errors[k] > threshold).collect(),
        threshold,
        median: med,
        iqr,
        c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

/// Splits `[min y, max y]` into equal-width bands and summarizes the
/// covariate in each; the maximum falls in the last band.
pub fn band_summary(covariate: &[f64], response: &[f64], n_bands: usize) -> Result<Vec<Band>> {
    if covariate.len() != response.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariates for {} responses",
            covariate.len(),
            response.len()
        )));
    }
    if n_bands == 0 {
        return Err(Error::InvalidParameter("need at least one band".into()));
    }
    if response.is_empty() {
        return Err(Error::Empty("band summary of no samples".into()));
    }
    let lo = response.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = response.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate("response is constant".into()));
    }
    let width = (hi - lo) / n_bands as f64;
    let mut members = vec![Vec::new(); n_bands];
    for (c, y) in covariate.iter().zip(response) {
        let b = (((y - lo) / width).floor() as usize).min(n_bands - 1);
        members[b].push(*c);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(b, m)| Band {
            lo: lo + b as f64 * width,
            hi: if b + 1 == n_bands { hi } else { lo + (b + 1) as f64 * width },
            count: m.len(),
            mean: (!m.is_empty()).then(|| m.iter().sum::<f64>() / m.len() as f64),
            median: median(&m),
        })
        .collect())
}
