use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use spectensor::baselines::{extract_ratio_covariate, fitted_spectra, MeanPredictor, RatioRegressionModel};
use spectensor::eval::{
    self, band_summary, error_metric, make_cv_batches, screen_outliers, Band, CvOptions, CvReport, Metric,
    OutlierReport, ParamGrid, Policy, TestSpec,
};
use spectensor::io::{self, DatasetManifest, FitSummary, ModelKind, ModelManifest};
use spectensor::kernel::{gram_matrix, kernel_matrix, GramMode, KernelSpec, SpectralGrid};
use spectensor::pipeline::{PipelineConfig, PipelineState};
use spectensor::plot::{self, PlotKind};
use spectensor::preprocess::{normalize, normalize_response, subsample_grid, truncate_grid, NormalizationMode, ResponseTransform};
use spectensor::rank_one::{fit_alternating, FitConfig, RankOneData, RegParams};
use spectensor::selection::{compute_scores, select_top, xtilde_from_coefficients, ScoreMode, SelectedSubset};
use spectensor::sparse_rep::{fit_all, SparseRepParams};
use spectensor::synth::{simulate, GroundTruth, ResponseNoise, SyntheticSpec};
use spectensor::{SpectrumTensor, TensorKind};

use crate::{
    BaselineKind, CliError, CliResult, Command, CovariateArgs, FactorArg, KernelArgs, MetricArg, NormalizationArg,
    PolicyArg, ScoreModeArg, SolverArgs,
};

pub fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Simulate {
            n,
            p,
            d,
            grid,
            sigma_spec,
            snr_db,
            sigma_resp,
            null,
            groups,
            keep,
            kernel,
            common,
        } => {
            let grid = parse_grid(&grid)?;
            let mut spec = SyntheticSpec::new(n, p, d, grid, common.seed);
            spec.sigma_spec = sigma_spec;
            if let Some(g) = groups {
                spec.groups = g.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            let cfg = pipeline_config(&kernel, keep)?;
            let noise = sigma_resp.map(ResponseNoise::Sigma).unwrap_or(ResponseNoise::SnrDb(snr_db));
            let ds = simulate(&spec, &cfg, !null, noise)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("simulated"));
            let raw_path = dir.join("raw.json");
            io::write_tensor(&raw_path, &ds.raw, DatasetManifest::describe(&ds.raw, ""))?;
            let truth = TruthFile {
                truth: ds.truth,
                pipeline: ds.reference.state.clone(),
                kept_wavenumbers: ds.reference.subset.grid.points().to_vec(),
            };
            io::write_json(&dir.join("ground_truth.json"), &truth)?;
            println!(
                "simulated {n}×{p}×{d}×{} spectra into {}",
                ds.raw.grid.len(),
                raw_path.display()
            );
            Ok(())
        }

        Command::FitRep { data, kernel, common } => {
            let (raw, _) = read_tensor(&data)?;
            expect_kind(&raw, TensorKind::Raw, &data)?;
            let spec = KernelSpec::lorentzian(kernel.width)?;
            let params = sparse_params(&kernel)?;
            let kmat = kernel_matrix(&spec, &raw.grid)?;
            let fit = fit_all(&raw, &kmat, &params)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("coeffs.json"));
            let mut manifest = DatasetManifest::describe(&fit.coeffs, "");
            manifest.kernel = Some(spec);
            manifest.sparse = Some(params);
            io::write_tensor(&out, &fit.coeffs, manifest)?;
            let bad = fit.non_converged();
            let worst = fit.kkt_residuals.iter().cloned().fold(0.0, f64::max);
            println!(
                "fitted {} spectra, {bad} not converged, worst KKT residual {worst:.3e}; wrote {}",
                fit.converged.len(),
                out.display()
            );
            if bad > 0 {
                return Err(CliError::NonConvergence(format!("{bad} spectra hit the iteration limit")));
            }
            Ok(())
        }

        Command::Score { coeffs, keep, mode, common } => {
            let (c, _) = read_tensor(&coeffs)?;
            expect_kind(&c, TensorKind::Coefficients, &coeffs)?;
            let mode = match mode {
                ScoreModeArg::Weighted => ScoreMode::Weighted,
                ScoreModeArg::Frequency => ScoreMode::Frequency,
            };
            let scores = compute_scores(&c, mode);
            let subset = select_top(&scores, &c.grid, keep)?;
            let file = ScoreFile {
                mode,
                grid: c.grid.points().to_vec(),
                scores: scores.scores,
                kept_indices: subset.kept_indices.clone(),
                kept_wavenumbers: subset.grid.points().to_vec(),
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("scores.json"));
            io::write_json(&out, &file)?;
            println!("kept {keep} of {} wavenumbers; wrote {}", c.grid.len(), out.display());
            Ok(())
        }

        Command::Preprocess {
            data,
            truncate,
            subsample,
            covariates,
            common,
        } => {
            if let Some(data) = data {
                let (mut t, manifest) = read_tensor(&data)?;
                if truncate.is_none() && subsample.is_none() {
                    return Err(CliError::Usage("raw preprocessing needs --truncate and/or --subsample".into()));
                }
                if let Some(u) = truncate {
                    t = truncate_grid(&t, u)?;
                }
                if let Some(m) = subsample {
                    t = subsample_grid(&t, m)?;
                }
                let out = common.out.unwrap_or_else(|| PathBuf::from("preprocessed.json"));
                let mut m = DatasetManifest::describe(&t, "");
                m.kernel = manifest.kernel;
                m.sparse = manifest.sparse;
                io::write_tensor(&out, &t, m)?;
                println!("wrote {} wavenumbers to {}", t.grid.len(), out.display());
                return Ok(());
            }
            let cov = load_covariates(&covariates)?;
            let state = cov.state.clone().ok_or_else(|| {
                CliError::Usage("preprocess builds covariates from --coeffs and --selection".into())
            })?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("xtilde.json"));
            let mut m = DatasetManifest::describe(&cov.xtilde, "");
            m.kernel = Some(state.config.kernel);
            m.sparse = Some(state.config.sparse);
            m.normalization = Some(state.normalization.clone());
            m.pipeline = Some(state);
            io::write_tensor(&out, &cov.xtilde, m)?;
            println!("wrote covariates on {} wavenumbers to {}", cov.xtilde.grid.len(), out.display());
            Ok(())
        }

        Command::Fit {
            covariates,
            solver,
            common,
        } => {
            let cov = load_covariates(&covariates)?;
            let y = responses(&cov.xtilde)?;
            let resp = normalize_response(&y)?;
            let data = RankOneData::new(cov.xtilde.values.clone(), resp.values.clone(), &cov.gram, solver.prune_rel)?;
            let params = single_params(&solver).unwrap_or_default();
            let cfg = fit_config(&solver, common.seed);
            let (model, report) = fit_alternating(&data, &params, &cfg)?;
            let pred: Vec<f64> = model
                .predict_all(&data.xtilde)?
                .into_iter()
                .map(|z| resp.transform.inverse(z))
                .collect();
            let mut manifest = ModelManifest::new(ModelKind::RankOne, resp.transform);
            manifest.rank_one = Some(model);
            manifest.params = Some(params);
            manifest.kernel = cov.kernel;
            manifest.kept_wavenumbers = cov.xtilde.grid.points().to_vec();
            manifest.sparse = cov.state.as_ref().map(|s| s.config.sparse);
            manifest.pipeline = cov.state;
            manifest.fit = Some(FitSummary::from(&report));
            manifest.training_predictions = pred.clone();
            manifest.training_responses = y.clone();
            manifest.notes.push(format!("prune_rel = {}", solver.prune_rel));
            let out = common.out.unwrap_or_else(|| PathBuf::from("model.json"));
            io::write_json(&out, &manifest)?;
            let mad = error_metric(&pred, &y, Metric::MedianAd)?;
            println!(
                "objective {:.6e} after {} sweeps{}; training MAD {mad:.4e}; wrote {}",
                report.final_objective(),
                report.sweeps,
                if report.zero_model { " (zero model)" } else { "" },
                out.display()
            );
            if !report.converged {
                return Err(CliError::NonConvergence(format!(
                    "alternating minimization stopped at the {}-sweep limit",
                    report.sweeps
                )));
            }
            Ok(())
        }

        Command::Predict { model, data, common } => {
            let m: ModelManifest = io::read_json(&model)?;
            m.validate()?;
            let (t, _) = read_tensor(&data)?;
            let pred = predict_with(&m, &t)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("predictions.csv"));
            let mut csv = String::from("sample,id,prediction,actual\n");
            for (k, v) in pred.iter().enumerate() {
                let actual = t.samples[k].response.map(|a| format!("{a:.16e}")).unwrap_or_default();
                csv += &format!("{k},{},{v:.16e},{actual}\n", csv_field(&t.samples[k].id));
            }
            io::atomic_write(&out, csv.as_bytes())?;
            println!("wrote {} predictions to {}", pred.len(), out.display());
            Ok(())
        }

        Command::Cv {
            covariates,
            solver,
            policy,
            batches,
            test_per_group,
            test_size,
            metric,
            group_exclusive,
            kappa_grid,
            full_grid,
            peak_num,
            peak_den,
            no_intercept,
            outlier_c,
            common,
        } => {
            let cov = load_covariates(&covariates)?;
            let y = responses(&cov.xtilde)?;
            let resp = normalize_response(&y)?;
            let data = RankOneData::new(cov.xtilde.values.clone(), resp.values.clone(), &cov.gram, solver.prune_rel)?;
            let n = y.len();
            let total = test_size.unwrap_or(((n as f64 * 6.0 / 32.0).round() as usize).max(1));
            let spec = TestSpec::auto(&cov.xtilde.samples, test_per_group, total);
            let splits = make_cv_batches(&cov.xtilde.samples, batches, spec, group_exclusive, common.seed)?;
            let grid = match single_params(&solver) {
                Some(p) => ParamGrid::single(p),
                None => {
                    let (lo, hi, count) = parse_range(&kappa_grid)?;
                    let v = eval::log_values(lo, hi, count);
                    if full_grid {
                        ParamGrid::full(&v, &v, &v, &v)
                    } else {
                        ParamGrid::tied(&v, &v)
                    }
                }
            };
            let mut opts = CvOptions {
                metric: match metric {
                    MetricArg::Median => Metric::MedianAd,
                    MetricArg::Mean => Metric::MeanAd,
                },
                fit: fit_config(&solver, common.seed),
                ratio: None,
                ratio_peaks: (peak_num, peak_den),
                ratio_intercept: !no_intercept,
            };
            let mut notes = Vec::new();
            if let (Some(c), Some(k)) = (&cov.coeffs, &cov.kernel) {
                let fitted = fitted_spectra(c, &kernel_matrix(k, &c.grid)?)?;
                match extract_ratio_covariate(&fitted, peak_num, peak_den) {
                    Ok(r) => opts.ratio = Some(r),
                    Err(e) => notes.push(format!("ratio baseline skipped: {e}")),
                }
            } else {
                notes.push("ratio baseline needs --coeffs".into());
            }
            let report = eval::run_cv(
                &data,
                &grid,
                &splits,
                match policy {
                    PolicyArg::Fixed => Policy::Fixed,
                    PolicyArg::Adaptive => Policy::Adaptive,
                },
                &opts,
            )?;
            let per_sample = report.per_sample_errors(n);
            let tested: Vec<(usize, f64)> = per_sample
                .iter()
                .enumerate()
                .filter_map(|(k, e)| e.map(|e| (k, e)))
                .collect();
            let mut outliers = screen_outliers(&tested.iter().map(|t| t.1).collect::<Vec<_>>(), outlier_c)?;
            outliers.excluded = outliers.excluded.iter().map(|&i| tested[i].0).collect();
            let file = CvFile {
                report,
                outliers,
                per_sample_errors: per_sample,
                sample_ids: cov.xtilde.samples.iter().map(|s| s.id.clone()).collect(),
                notes,
            };
            let dir = common.out.unwrap_or_else(|| PathBuf::from("cv"));
            io::atomic_write(&dir.join("cv_report.csv"), file.report.to_csv().as_bytes())?;
            io::write_json(&dir.join("cv_report.json"), &file)?;
            let s = &file.report.summary;
            println!(
                "{:?} policy, {}: model {}, mean predictor {:.4e}{}; {} of {} batches beat the mean; {} outliers; wrote {}",
                file.report.policy,
                file.report.metric_label,
                s.model_mean_test.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "n/a".into()),
                s.mean_mean_test,
                s.ratio_mean_test.map(|v| format!(", ratio {v:.4e}")).unwrap_or_default(),
                s.batches_beating_mean,
                file.report.batches.len(),
                file.outliers.excluded.len(),
                dir.display()
            );
            if s.failed_fits > 0 {
                eprintln!("warning: {} fits failed and were excluded", s.failed_fits);
            }
            Ok(())
        }

        Command::Baseline {
            kind,
            data,
            peak_num,
            peak_den,
            no_intercept,
            common,
        } => {
            let (t, manifest) = read_tensor(&data)?;
            let y = responses(&t)?;
            let mut m = ModelManifest::new(
                match kind {
                    BaselineKind::Mean => ModelKind::Mean,
                    BaselineKind::Ratio => ModelKind::Ratio,
                },
                ResponseTransform::identity(),
            );
            let pred: Vec<f64> = match kind {
                BaselineKind::Mean => {
                    let mean = MeanPredictor::fit(&y)?;
                    m.mean = Some(mean);
                    vec![mean.predict(); y.len()]
                }
                BaselineKind::Ratio => {
                    expect_kind(&t, TensorKind::Coefficients, &data)?;
                    let kernel = manifest
                        .kernel
                        .ok_or_else(|| CliError::Data(format!("{} does not record a kernel", data.display())))?;
                    let fitted = fitted_spectra(&t, &kernel_matrix(&kernel, &t.grid)?)?;
                    let cov = extract_ratio_covariate(&fitted, peak_num, peak_den)?;
                    let model = RatioRegressionModel::fit(&cov, &y, peak_num, peak_den, !no_intercept)?;
                    for w in &model.warnings {
                        eprintln!("warning: {w}");
                    }
                    let pred = cov.iter().map(|c| model.predict(*c)).collect();
                    m.kernel = Some(kernel);
                    m.sparse = manifest.sparse;
                    m.ratio = Some(model);
                    pred
                }
            };
            m.training_predictions = pred.clone();
            m.training_responses = y.clone();
            let out = common.out.unwrap_or_else(|| PathBuf::from("baseline.json"));
            io::write_json(&out, &m)?;
            println!(
                "training MAD {:.4e}; wrote {}",
                error_metric(&pred, &y, Metric::MedianAd)?,
                out.display()
            );
            Ok(())
        }

        Command::BandSummary {
            data,
            wavenumber,
            predictions,
            bands,
            common,
        } => {
            let (t, _) = read_tensor(&data)?;
            let y = responses(&t)?;
            let (cov, label) = match (wavenumber, predictions) {
                (Some(w), None) => {
                    let l = t.grid.nearest_index(w);
                    let (n, p, d, _) = t.dims();
                    let c = (0..n)
                        .map(|k| t.values.slice(ndarray::s![k, .., .., l]).sum() / (p * d) as f64)
                        .collect();
                    (c, format!("mean value at {} cm⁻¹", t.grid.points()[l]))
                }
                (None, Some(path)) => (read_prediction_column(&path, y.len())?, "predicted response".to_string()),
                _ => return Err(CliError::Usage("give exactly one of --wavenumber or --predictions".into())),
            };
            let b = band_summary(&cov, &y, bands)?;
            let file = BandFile {
                bands: b,
                points: y.iter().copied().zip(cov.iter().copied()).collect(),
                response_label: "response".into(),
                covariate_label: label,
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("bands.json"));
            io::write_json(&out, &file)?;
            for band in &file.bands {
                println!(
                    "[{:.4}, {:.4}] n = {} mean {} median {}",
                    band.lo,
                    band.hi,
                    band.count,
                    band.mean.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into()),
                    band.median.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
                );
            }
            Ok(())
        }

        Command::Plot {
            kind,
            input,
            data,
            sample,
            source,
            detector,
            factor,
            common,
        } => {
            let kind: PlotKind = kind.parse().map_err(|e: spectensor::Error| CliError::Usage(e.to_string()))?;
            let svg = render(kind, &input, data.as_deref(), (sample, source, detector), factor)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from(format!("{}.svg", kind.name())));
            io::atomic_write(&out, svg.as_bytes())?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreFile {
    pub mode: ScoreMode,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub kept_indices: Vec<usize>,
    pub kept_wavenumbers: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth: GroundTruth,
    pub pipeline: PipelineState,
    pub kept_wavenumbers: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CvFile {
    pub report: CvReport,
    pub outliers: OutlierReport,
    pub per_sample_errors: Vec<Option<f64>>,
    pub sample_ids: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BandFile {
    pub bands: Vec<Band>,
    /// `(response, covariate)` per sample.
    pub points: Vec<(f64, f64)>,
    pub response_label: String,
    pub covariate_label: String,
}

fn read_tensor(path: &Path) -> CliResult<(SpectrumTensor, DatasetManifest)> {
    Ok(io::read_tensor(path)?)
}

fn expect_kind(t: &SpectrumTensor, kind: TensorKind, path: &Path) -> CliResult {
    if t.kind == kind {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} holds {:?} data, expected {:?}",
            path.display(),
            t.kind,
            kind
        )))
    }
}

fn responses(t: &SpectrumTensor) -> CliResult<Vec<f64>> {
    t.responses()
        .ok_or_else(|| CliError::Data("every sample needs a response in the manifest".into()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `LO:HI:COUNT`.
pub fn parse_range(s: &str) -> CliResult<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("expected LO:HI:COUNT, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse().map_err(|_| bad())?;
    let hi = parts[1].trim().parse().map_err(|_| bad())?;
    let count = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((lo, hi, count))
}

/// `LO:HI:COUNT` for a uniform grid, otherwise a file of wavenumbers.
pub fn parse_grid(s: &str) -> CliResult<SpectralGrid> {
    if s.matches(':').count() == 2 && !Path::new(s).exists() {
        let (lo, hi, count) = parse_range(s)?;
        return SpectralGrid::uniform(lo, hi, count).map_err(|e| CliError::Usage(e.to_string()));
    }
    let text = std::fs::read_to_string(s).map_err(|e| CliError::Data(format!("grid file {s}: {e}")))?;
    let points = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Data(format!("grid file {s}: '{t}' is not a number"))))
        .collect::<CliResult<Vec<f64>>>()?;
    SpectralGrid::new(points).map_err(|e| CliError::Data(format!("grid file {s}: {e}")))
}

fn parse_gram_mode(s: &str) -> CliResult<GramMode> {
    if s == "closed-form" {
        return Ok(GramMode::ClosedFormRealLine);
    }
    if let Some(rest) = s.strip_prefix("quadrature:") {
        let mut it = rest.split(':');
        if let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) {
            if let (Ok(lo), Ok(hi)) = (a.parse(), b.parse()) {
                return Ok(GramMode::QuadratureInterval { lo, hi });
            }
        }
    }
    Err(CliError::Usage(format!("gram mode must be closed-form or quadrature:LO:HI, got '{s}'")))
}

fn sparse_params(k: &KernelArgs) -> CliResult<SparseRepParams> {
    let p = SparseRepParams {
        lambda_h: k.lambda_h,
        lambda_1: k.lambda_1,
        tol: k.rep_tol,
        max_iter: k.rep_max_iter,
    };
    p.validate()?;
    Ok(p)
}

fn pipeline_config(k: &KernelArgs, keep: usize) -> CliResult<PipelineConfig> {
    Ok(PipelineConfig {
        kernel: KernelSpec::lorentzian(k.width)?,
        sparse: sparse_params(k)?,
        keep,
        ..PipelineConfig::default()
    })
}

fn normalization_mode(a: NormalizationArg) -> NormalizationMode {
    match a {
        NormalizationArg::MaxAmplitude => NormalizationMode::MaxAmplitude,
        NormalizationArg::SourceEnergy => NormalizationMode::SourceEnergy,
        NormalizationArg::None => NormalizationMode::None,
    }
}

/// The κ point given on the command line, if any κ flag was used.
fn single_params(s: &SolverArgs) -> Option<RegParams> {
    let any = s.kappa.is_some()
        || s.kappa_alpha.is_some()
        || s.kappa_beta.is_some()
        || s.kappa_gamma.is_some()
        || s.kappa_gram.is_some();
    if !any {
        return None;
    }
    let base = s.kappa.unwrap_or(RegParams::default().kappa_alpha);
    Some(RegParams {
        kappa_alpha: s.kappa_alpha.unwrap_or(base),
        kappa_beta: s.kappa_beta.unwrap_or(base),
        kappa_gamma: s.kappa_gamma.unwrap_or(base),
        kappa_gram: s.kappa_gram.unwrap_or(base),
    })
}

fn fit_config(s: &SolverArgs, seed: u64) -> FitConfig {
    FitConfig {
        tol_outer: s.tol_outer,
        max_outer: s.max_outer,
        restarts: s.restarts.max(1),
        seed,
        ..FitConfig::default()
    }
}

struct Covariates {
    xtilde: SpectrumTensor,
    gram: DMatrix<f64>,
    kernel: Option<KernelSpec>,
    state: Option<PipelineState>,
    /// Full-grid coefficients, when available, for the ratio baseline.
    coeffs: Option<SpectrumTensor>,
}

fn load_covariates(a: &CovariateArgs) -> CliResult<Covariates> {
    let gram_mode = parse_gram_mode(&a.gram_mode)?;
    match (&a.xtilde, &a.coeffs, &a.selection) {
        (Some(path), _, _) => {
            let (t, m) = read_tensor(path)?;
            expect_kind(&t, TensorKind::Xtilde, path)?;
            let kernel = m
                .pipeline
                .as_ref()
                .map(|s| s.config.kernel)
                .or(m.kernel)
                .ok_or_else(|| CliError::Data(format!("{} does not record a kernel", path.display())))?;
            let mode = m.pipeline.as_ref().map(|s| s.config.gram_mode).unwrap_or(gram_mode);
            let gram = gram_matrix(&kernel, &t.grid, mode)?.entries;
            let coeffs = match &a.coeffs {
                Some(c) => Some(read_tensor(c)?.0),
                None => None,
            };
            Ok(Covariates {
                xtilde: t,
                gram,
                kernel: Some(kernel),
                state: m.pipeline,
                coeffs,
            })
        }
        (None, Some(cpath), Some(spath)) => {
            let (c, m) = read_tensor(cpath)?;
            expect_kind(&c, TensorKind::Coefficients, cpath)?;
            let kernel = m
                .kernel
                .ok_or_else(|| CliError::Data(format!("{} does not record a kernel", cpath.display())))?;
            let sel: ScoreFile = io::read_json(spath)?;
            if sel.grid != c.grid.points() {
                return Err(CliError::Data("selection was computed on a different grid".into()));
            }
            let subset = SelectedSubset {
                kept_indices: sel.kept_indices.clone(),
                grid: c.grid.subset(&sel.kept_indices)?,
            };
            let (xt, gram) = xtilde_from_coefficients(&c, &subset, &kernel, gram_mode)?;
            let mode = normalization_mode(a.normalization);
            let (xtilde, record) = normalize(&xt, mode);
            let state = PipelineState {
                config: PipelineConfig {
                    kernel,
                    sparse: m.sparse.unwrap_or_default(),
                    score_mode: sel.mode,
                    keep: sel.kept_indices.len(),
                    gram_mode,
                    normalization: mode,
                },
                full_grid: c.grid.clone(),
                kept_indices: subset.kept_indices,
                kept_grid: subset.grid,
                normalization: record,
            };
            Ok(Covariates {
                xtilde,
                gram,
                kernel: Some(kernel),
                state: Some(state),
                coeffs: Some(c),
            })
        }
        _ => Err(CliError::Usage("give --xtilde, or --coeffs together with --selection".into())),
    }
}

fn predict_with(m: &ModelManifest, t: &SpectrumTensor) -> CliResult<Vec<f64>> {
    match m.kind {
        ModelKind::Mean => Ok(vec![m.mean.unwrap().predict(); t.dims().0]),
        ModelKind::Ratio => {
            let ratio = m.ratio.as_ref().unwrap();
            let kernel = m.kernel.unwrap();
            let kmat = kernel_matrix(&kernel, &t.grid)?;
            let coeffs = match t.kind {
                TensorKind::Coefficients => t.clone(),
                TensorKind::Raw => fit_all(t, &kmat, &m.sparse.unwrap_or_default())?.coeffs,
                TensorKind::Xtilde => {
                    return Err(CliError::Data("ratio regression needs raw spectra or coefficients".into()))
                }
            };
            let fitted = fitted_spectra(&coeffs, &kmat)?;
            let cov = extract_ratio_covariate(&fitted, ratio.peak_num, ratio.peak_den)?;
            Ok(cov.iter().map(|c| ratio.predict(*c)).collect())
        }
        ModelKind::RankOne => {
            let model = m.rank_one.as_ref().unwrap();
            let xt = match t.kind {
                TensorKind::Xtilde => {
                    if t.grid.points() != m.kept_wavenumbers.as_slice() {
                        return Err(CliError::Data("covariates are on different wavenumbers than the model".into()));
                    }
                    t.clone()
                }
                kind => {
                    let state = m.pipeline.as_ref().ok_or_else(|| {
                        CliError::Data("model was fitted on covariates only; pass covariates from `preprocess`".into())
                    })?;
                    if kind == TensorKind::Raw {
                        state.transform_raw(t)?.0
                    } else {
                        state.transform_coefficients(t)?.0
                    }
                }
            };
            Ok(model
                .predict_all(&xt.values)?
                .into_iter()
                .map(|z| m.response_transform.inverse(z))
                .collect())
        }
    }
}

fn read_prediction_column(path: &Path, n: usize) -> CliResult<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let (si, pi) = match (
        headers.iter().position(|h| h == "sample"),
        headers.iter().position(|h| h == "prediction"),
    ) {
        (Some(s), Some(p)) => (s, p),
        _ => return Err(CliError::Data(format!("{}: needs sample and prediction columns", path.display()))),
    };
    let mut out = vec![None; n];
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let bad = || CliError::Data(format!("{}: row {}", path.display(), row + 2));
        let k: usize = rec[si].parse().map_err(|_| bad())?;
        let v: f64 = rec[pi].parse().map_err(|_| bad())?;
        *out.get_mut(k).ok_or_else(bad)? = Some(v);
    }
    out.into_iter()
        .enumerate()
        .map(|(k, v)| v.ok_or_else(|| CliError::Data(format!("{}: no prediction for sample {k}", path.display()))))
        .collect()
}

fn render(
    kind: PlotKind,
    input: &Path,
    data: Option<&Path>,
    slot: (usize, usize, usize),
    factor: FactorArg,
) -> CliResult<String> {
    Ok(match kind {
        PlotKind::ScatterPredVsActual => {
            let pts: Vec<(f64, f64)> = match io::read_json::<CvFile>(input) {
                Ok(f) => f
                    .report
                    .predictions
                    .iter()
                    .filter_map(|p| p.model.map(|m| (p.actual, m)))
                    .collect(),
                Err(_) => {
                    let m: ModelManifest = io::read_json(input)?;
                    m.training_responses.iter().copied().zip(m.training_predictions.iter().copied()).collect()
                }
            };
            plot::scatter_pred_vs_actual(&pts, "response")
        }
        PlotKind::ErrorScatter => {
            let f: CvFile = io::read_json(input)?;
            let pts: Vec<(f64, f64)> = f
                .report
                .batches
                .iter()
                .filter_map(|b| b.model_test.map(|e| (b.mean_test, e)))
                .collect();
            plot::error_scatter(&pts, &f.report.metric_label)
        }
        PlotKind::CoeffBoxplot => {
            let (vectors, label) = match io::read_json::<CvFile>(input) {
                Ok(f) => {
                    let v: Vec<Vec<f64>> = f
                        .report
                        .batches
                        .iter()
                        .filter_map(|b| match factor {
                            FactorArg::Alpha => b.alpha.clone(),
                            FactorArg::Beta => b.beta.clone(),
                        })
                        .collect();
                    (v, "batches")
                }
                Err(_) => {
                    let m: ModelManifest = io::read_json(input)?;
                    let v = m
                        .rank_one
                        .map(|r| match factor {
                            FactorArg::Alpha => r.alpha,
                            FactorArg::Beta => r.beta,
                        })
                        .into_iter()
                        .collect();
                    (v, "fit")
                }
            };
            // normalize each fit to unit norm so batches are comparable
            let width = vectors.iter().map(|v| v.len()).max().unwrap_or(0);
            let groups: Vec<Vec<f64>> = (0..width)
                .map(|i| {
                    vectors
                        .iter()
                        .filter_map(|v| {
                            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                            (nrm > 0.0).then(|| v.get(i).copied().unwrap_or(0.0) / nrm)
                        })
                        .collect()
                })
                .collect();
            let (axis, value) = match factor {
                FactorArg::Alpha => ("source", "source weights"),
                FactorArg::Beta => ("detector", "detector weights"),
            };
            let _ = label;
            plot::coeff_boxplot(&groups, axis, value)
        }
        PlotKind::SpectrumFit => {
            let (c, m) = read_tensor(input)?;
            expect_kind(&c, TensorKind::Coefficients, input)?;
            let kernel = m
                .kernel
                .ok_or_else(|| CliError::Data(format!("{} does not record a kernel", input.display())))?;
            let (k, i, j) = slot;
            let (n, p, d, _) = c.dims();
            if k >= n || i >= p || j >= d {
                return Err(CliError::Usage(format!("slot ({k}, {i}, {j}) is outside {n}×{p}×{d}")));
            }
            let x: Vec<f64> = c.values.slice(ndarray::s![k, i, j, ..]).to_vec();
            let kmat = kernel_matrix(&kernel, &c.grid)?;
            let fitted: Vec<f64> = (0..x.len()).map(|m| (0..x.len()).map(|l| kmat[(m, l)] * x[l]).sum()).collect();
            let observed = match data {
                Some(path) => {
                    let (raw, _) = read_tensor(path)?;
                    if raw.grid != c.grid || raw.dims().0 <= k {
                        return Err(CliError::Data("raw spectra do not match the coefficients".into()));
                    }
                    Some(raw.values.slice(ndarray::s![k, i, j, ..]).to_vec())
                }
                None => None,
            };
            plot::spectrum_fit(c.grid.points(), observed.as_deref(), &fitted, &x)
        }
        PlotKind::Scores => {
            let s: ScoreFile = io::read_json(input)?;
            plot::scores(&s.grid, &s.scores, &s.kept_indices)
        }
        PlotKind::BandSummary => {
            let b: BandFile = io::read_json(input)?;
            plot::band_summary(&b.points, &b.bands, &b.response_label, &b.covariate_label)
        }
    })
}
