//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectensor::eval::{
    make_cv_batches, run_cv_adaptive, run_cv_fixed, CvOptions, CvReport, ParamGrid, TestSpec,
};
use spectensor::kernel::{gram_matrix, kernel_matrix, GramMode, KernelSpec, SpectralGrid};
use spectensor::pipeline::PipelineConfig;
use spectensor::preprocess::normalize_response;
use spectensor::rank_one::{
    alpha_design, beta_design, fit_alternating, gamma_problem, objective, solve_gamma_subproblem, AdmmConfig, Block,
    FitConfig, GroupConfig, NonnegGroupProblem, RankOneData, RankOneModel, RegParams, DEFAULT_PRUNE_REL,
};
use spectensor::sparse_rep::{SparseRepParams, SparseRepSolver};
use spectensor::synth::{generate_response, simulate, ResponseNoise, SimulatedDataset, SyntheticSpec};
use spectensor_oracles as oracle;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Sorted grid whose gaps are drawn between `lo_gap` and `hi_gap`.
fn random_grid(rng: &mut ChaCha8Rng, len: usize, lo_gap: f64, hi_gap: f64) -> SpectralGrid {
    let mut t = rng.gen_range(0.0..100.0);
    let mut pts = Vec::with_capacity(len);
    for _ in 0..len {
        pts.push(t);
        t += rng.gen_range(lo_gap..hi_gap);
    }
    SpectralGrid::new(pts).unwrap()
}

fn c1_sparse_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let len = rng.gen_range(1..=8);
        let width = rng.gen_range(1.0..20.0);
        let grid = random_grid(&mut rng, len, 0.5 * width, 3.0 * width);
        let kmat = kernel_matrix(&KernelSpec::lorentzian(width).unwrap(), &grid).unwrap();
        let truth: Vec<f64> = (0..len)
            .map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.1..1.0) } else { 0.0 })
            .collect();
        let x = &kmat * DVector::from_column_slice(&truth);
        let data: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
        let params = SparseRepParams {
            lambda_h: log_uniform(&mut rng, 1e-4, 1e-1),
            lambda_1: log_uniform(&mut rng, 1e-4, 1e-1),
            ..SparseRepParams::default()
        };
        let fit = SparseRepSolver::new(&kmat, params).unwrap().fit(&data).unwrap();
        let exact = oracle::sparse_rep_exhaustive(&kmat, &data, params.lambda_h, params.lambda_1);
        for (a, b) in fit.coeffs.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!("max |x − x*| = {worst:.2e}, {elapsed:.2?}"),
    )
}

fn random_rank_one_data(rng: &mut ChaCha8Rng, n: usize, p: usize, d: usize, len: usize) -> RankOneData {
    let width = rng.gen_range(2.0..20.0);
    let grid = random_grid(rng, len, 0.3 * width, 2.0 * width);
    let gram = gram_matrix(&KernelSpec::lorentzian(width).unwrap(), &grid, GramMode::ClosedFormRealLine)
        .unwrap()
        .entries;
    let xt = Array4::from_shape_fn((n, p, d, len), |_| rng.gen_range(0.0..1.0));
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RankOneData::new(xt, y, &gram, DEFAULT_PRUNE_REL).unwrap()
}

fn c2_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut sparse, mut group, mut fused) = (0.0f64, 0.0f64, 0.0f64);
    let (mut checked_sparse, mut checked_group, mut checked_fused) = (0, 0, 0);

    for _ in 0..100 {
        let len = rng.gen_range(5..=40);
        let width = rng.gen_range(1.0..20.0);
        let grid = random_grid(&mut rng, len, 0.2 * width, 2.0 * width);
        let kmat = kernel_matrix(&KernelSpec::lorentzian(width).unwrap(), &grid).unwrap();
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let params = SparseRepParams {
            lambda_h: log_uniform(&mut rng, 1e-4, 1e-1),
            lambda_1: log_uniform(&mut rng, 1e-4, 1e-1),
            ..SparseRepParams::default()
        };
        let fit = SparseRepSolver::new(&kmat, params).unwrap().fit(&data).unwrap();
        checked_sparse += fit.converged as usize;
        sparse = sparse.max(oracle::sparse_rep_kkt(&kmat, &data, params.lambda_h, params.lambda_1, &fit.coeffs));
    }

    for _ in 0..100 {
        let (p, d, len) = (rng.gen_range(2..=6), rng.gen_range(2..=8), rng.gen_range(4..=15));
        let data = random_rank_one_data(&mut rng, 25, p, d, len);
        let alpha: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..1.0)).collect();
        let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let gamma: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = log_uniform(&mut rng, 1e-4, 1.0);
        let design = if rng.gen_bool(0.5) {
            alpha_design(&data, &beta, &gamma)
        } else {
            beta_design(&data, &alpha, &gamma)
        };
        let prob = NonnegGroupProblem::from_design(&design, &data.response, c);
        let warm = vec![1.0; design.ncols()];
        let sol = prob.solve(&warm, &GroupConfig::default());
        checked_group += sol.converged as usize;
        group = group.max(oracle::group_kkt(&prob.q, &prob.b, prob.c, &DVector::from_column_slice(&sol.x)));
    }

    for _ in 0..100 {
        let (p, d, len) = (rng.gen_range(1..=5), rng.gen_range(1..=6), rng.gen_range(4..=20));
        let data = random_rank_one_data(&mut rng, 30, p, d, len);
        let alpha: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..1.0)).collect();
        let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..1.0)).collect();
        let kg = log_uniform(&mut rng, 1e-4, 1.0);
        let kf = log_uniform(&mut rng, 1e-4, 10.0);
        let prob = gamma_problem(&data, &alpha, &beta, kg, kf);
        let sol = prob.solve(&vec![0.0; len], &AdmmConfig::default());
        checked_fused += (sol.converged || sol.polished) as usize;
        let x = DVector::from_column_slice(&sol.x);
        fused = fused.max(oracle::fused_kkt(&prob.q, &prob.b, prob.coord_weight, &prob.edges, &x, 1e-9));
    }

    outcome(
        sparse <= 1e-6 && group <= 1e-6 && fused <= 1e-6,
        format!(
            "worst residual over all instances: sparse-rep {sparse:.1e} ({checked_sparse}/100 met solver tol), \
             α/β block {group:.1e} ({checked_group}/100), γ block {fused:.1e} ({checked_fused}/100)"
        ),
    )
}

fn c3_gram() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let len = rng.gen_range(2..=20);
        let width = rng.gen_range(1.0..50.0);
        let span = rng.gen_range(0.0..5.0) * width;
        let mut pts: Vec<f64> = (0..len).map(|_| 1000.0 + rng.gen_range(0.0..=span)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let grid = SpectralGrid::new(pts).unwrap();
        let spec = KernelSpec::lorentzian(width).unwrap();
        let closed = gram_matrix(&spec, &grid, GramMode::ClosedFormRealLine).unwrap().entries;
        let window = GramMode::QuadratureInterval {
            lo: grid.min() - 200.0 * width,
            hi: grid.max() + 200.0 * width,
        };
        let quad = gram_matrix(&spec, &grid, window).unwrap().entries;
        for (a, b) in closed.iter().zip(quad.iter()) {
            worst = worst.max((a - b).abs() / a.abs());
        }
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

fn small_dataset(n: usize, len: usize, keep: usize, seed: u64, planted: bool) -> (SimulatedDataset, RankOneData) {
    let grid = SpectralGrid::uniform(900.0, 1700.0, len).unwrap();
    let spec = SyntheticSpec::new(n, 5, 10, grid, seed);
    let cfg = PipelineConfig {
        keep,
        ..PipelineConfig::default()
    };
    let ds = simulate(&spec, &cfg, planted, ResponseNoise::SnrDb(20.0)).unwrap();
    let y = normalize_response(ds.truth.raw_response.as_ref().unwrap()).unwrap();
    let data = RankOneData::new(ds.reference.xtilde.values.clone(), y.values, &ds.reference.gram, DEFAULT_PRUNE_REL)
        .unwrap();
    (ds, data)
}

fn c4_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let grid = ParamGrid::default();
    let mut worst = f64::NEG_INFINITY;
    let (mut blocks, mut rejected, mut errors) = (0usize, 0usize, Vec::new());
    for fit in 0..50 {
        let (_, data) = small_dataset(20, 60, 20, 4000 + fit, true);
        let params = grid.points[rng.gen_range(0..grid.points.len())];
        let cfg = FitConfig {
            seed: fit,
            restarts: 2,
            ..FitConfig::default()
        };
        match fit_alternating(&data, &params, &cfg) {
            Ok((_, report)) => {
                worst = worst.max(report.max_increase());
                blocks += report.block_trace.len() - 1;
                rejected += report.rejected_updates;
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    outcome(
        errors.is_empty() && worst <= 1e-10,
        format!(
            "largest increase {worst:.2e} over {blocks} block updates ({rejected} rejected){}",
            errors.first().map(|e| format!("; error: {e}")).unwrap_or_default()
        ),
    )
}

fn cv_summary_line(r: &CvReport) -> (f64, f64) {
    (r.summary.model_mean_test.unwrap_or(f64::INFINITY), r.summary.mean_mean_test)
}

fn c5_planted() -> Outcome {
    let start = Instant::now();
    let (ds, data) = small_dataset(60, 120, 40, 11, true);
    let batches = make_cv_batches(&ds.raw.samples, 50, TestSpec::Total(11), false, 1).unwrap();
    let report = run_cv_fixed(&data, &ParamGrid::default(), &batches, &CvOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let (model, mean) = cv_summary_line(&report);
    outcome(
        model <= 0.2 * mean && elapsed < Duration::from_secs(600),
        format!(
            "model MAD {model:.4} vs mean predictor {mean:.4} (ratio {:.3}), {} failed fits, {elapsed:.1?}",
            model / mean,
            report.summary.failed_fits
        ),
    )
}

fn c6_degenerate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let params = RegParams::uniform(1e-3);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let data = random_rank_one_data(&mut rng, 30, 1, 1, 15);
        let (model, _) = fit_alternating(&data, &params, &FitConfig::default()).unwrap();
        let fit_obj = objective(&model, &data, &params);
        let sol = solve_gamma_subproblem(
            &data,
            &[1.0],
            &[1.0],
            params.kappa_gamma,
            params.kappa_gram,
            &vec![0.0; 15],
            None,
            &AdmmConfig::default(),
        );
        let standalone = spectensor::RankOneModel {
            alpha: vec![1.0],
            beta: vec![1.0],
            gamma: sol.x,
        };
        worst = worst.max((fit_obj - objective(&standalone, &data, &params)).abs());
    }

    let data = random_rank_one_data(&mut rng, 30, 5, 1, 15);
    let (model, report) = fit_alternating(&data, &params, &FitConfig::default()).unwrap();
    let two_block = model.beta == vec![1.0]
        && !report.block_trace.contains(&Block::Beta)
        && (report.zero_model || report.block_trace.contains(&Block::Alpha));

    outcome(
        worst <= 1e-8 && two_block,
        format!("p = d = 1 objective gap {worst:.2e}; d = 1 uses γ/α blocks only: {two_block}"),
    )
}

fn fused_limit_fit(xtilde: &Array4<f64>, y: &[f64], gram: &nalgebra::DMatrix<f64>) -> (f64, f64, usize, bool) {
    let resp = normalize_response(y).unwrap();
    let full = RankOneData::new(xtilde.clone(), resp.values, gram, 0.0).unwrap();
    let base = RegParams::default();
    let params = RegParams {
        kappa_gram: base.kappa_gram * 1e6,
        ..base
    };
    let (model, report) = fit_alternating(&full, &params, &FitConfig::default()).unwrap();
    let max = model.gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = model.gamma.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = model.gamma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (max - min, scale, full.graph.edges.len(), report.zero_model)
}

// A zero γ meets the spread bound vacuously. Under max-amplitude
// normalization Σ_l x̃ barely varies between samples, so a constant γ carries
// almost no signal for a centred response and the default κ collapse the fit.
// The graded fit gives each sample its own overall intensity and plants a
// constant γ; the unscaled two-bump response is reported alongside.
fn c7_fused_limit() -> Outcome {
    let (ds, data) = small_dataset(40, 80, 20, 707, true);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut xtilde = data.xtilde.clone();
    for mut sample in xtilde.outer_iter_mut() {
        let u = log_uniform(&mut rng, 0.25, 4.0);
        sample.mapv_inplace(|v| v * u);
    }
    let planted = ds.truth.planted.clone().unwrap();
    let flat = RankOneModel {
        gamma: vec![1.0; planted.gamma.len()],
        ..planted
    };
    let (y, _, _) = generate_response(&flat, &xtilde, ResponseNoise::SnrDb(20.0), 707).unwrap();
    let (spread, scale, edges, zero) = fused_limit_fit(&xtilde, &y, &ds.reference.gram);
    let (bump_spread, _, _, bump_zero) =
        fused_limit_fit(&data.xtilde, ds.truth.raw_response.as_ref().unwrap(), &ds.reference.gram);
    outcome(
        spread <= 1e-4 * scale && !zero,
        format!(
            "γ spread {spread:.2e} vs 1e-4·max|γ| = {:.2e}, {edges} edges, zero model: {zero}; \
             unscaled two-bump response: spread {bump_spread:.2e}, zero model: {bump_zero}",
            1e-4 * scale
        ),
    )
}

fn c8_dominance() -> Outcome {
    let (ds, data) = small_dataset(30, 60, 20, 808, true);
    let batches = make_cv_batches(&ds.raw.samples, 10, TestSpec::Total(6), false, 8).unwrap();
    let grid = ParamGrid::tied(&[1e-4, 1e-2, 1.0], &[1e-4, 1e-2, 1.0]);
    let opts = CvOptions::default();
    let fixed = run_cv_fixed(&data, &grid, &batches, &opts).unwrap();
    let adaptive = run_cv_adaptive(&data, &grid, &batches, &opts).unwrap();
    let mut violations = 0;
    for (f, a) in fixed.batches.iter().zip(&adaptive.batches) {
        match (f.model_test, a.model_test) {
            (Some(f), Some(a)) if a <= f => {}
            _ => violations += 1,
        }
    }
    outcome(
        violations == 0,
        format!("{violations} of {} batches violate adaptive ≤ fixed", fixed.batches.len()),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["spectensor"];
    argv.extend_from_slice(args);
    spectensor_cli::run(argv)
}

fn c9_pipeline() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let start = Instant::now();
    let mut steps: Vec<(String, i32)> = Vec::new();
    let mut run = |label: &str, args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        steps.push((label.to_string(), cli(&refs)));
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    run("simulate", s(&["simulate", "--n", "37", "--p", "5", "--d", "10", "--grid", "954:1700:544", "--seed", "9", "--out", &p("sim")]));
    run("fit-rep", s(&["fit-rep", "--data", &p("sim/raw.json"), "--out", &p("coeffs.json")]));
    run("score", s(&["score", "--coeffs", &p("coeffs.json"), "--keep", "40", "--out", &p("scores.json")]));
    run(
        "fit",
        s(&["fit", "--coeffs", &p("coeffs.json"), "--selection", &p("scores.json"), "--out", &p("model.json")]),
    );
    run("predict", s(&["predict", "--model", &p("model.json"), "--data", &p("sim/raw.json"), "--out", &p("pred.csv")]));
    run(
        "preprocess",
        s(&["preprocess", "--coeffs", &p("coeffs.json"), "--selection", &p("scores.json"), "--out", &p("xt.json")]),
    );
    run(
        "cv",
        s(&[
            "cv", "--xtilde", &p("xt.json"), "--coeffs", &p("coeffs.json"), "--batches", "5", "--kappa", "0.01",
            "--out", &p("cv"),
        ]),
    );
    run(
        "band-summary",
        s(&["band-summary", "--data", &p("sim/raw.json"), "--predictions", &p("pred.csv"), "--out", &p("bands.json")]),
    );
    let plots = [
        ("scatter_pred_vs_actual", p("model.json")),
        ("error_scatter", p("cv/cv_report.json")),
        ("coeff_boxplot", p("cv/cv_report.json")),
        ("spectrum_fit", p("coeffs.json")),
        ("scores", p("scores.json")),
        ("band_summary", p("bands.json")),
    ];
    for (kind, input) in &plots {
        let out = p(&format!("{kind}.svg"));
        run(kind, s(&["plot", "--kind", kind, "--input", input, "--data", &p("sim/raw.json"), "--out", &out]));
    }
    let elapsed = start.elapsed();
    let failed: Vec<String> = steps
        .iter()
        .filter(|(_, code)| *code != 0)
        .map(|(l, c)| format!("{l} exited {c}"))
        .collect();
    let svgs = plots
        .iter()
        .filter(|(k, _)| {
            std::fs::read_to_string(Path::new(&p(&format!("{k}.svg"))))
                .map(|t| t.starts_with("<svg") && t.trim_end().ends_with("</svg>"))
                .unwrap_or(false)
        })
        .count();
    outcome(
        failed.is_empty() && svgs == 6 && elapsed < Duration::from_secs(1800),
        format!(
            "{} steps, {svgs}/6 plots written, {elapsed:.1?}{}",
            steps.len(),
            if failed.is_empty() { String::new() } else { format!("; {}", failed.join(", ")) }
        ),
    )
}

fn c10_null() -> Outcome {
    let start = Instant::now();
    let (ds, data) = small_dataset(60, 120, 40, 1010, false);
    let batches = make_cv_batches(&ds.raw.samples, 50, TestSpec::Total(11), false, 10).unwrap();
    let report = run_cv_fixed(&data, &ParamGrid::default(), &batches, &CvOptions::default()).unwrap();
    let (model, mean) = cv_summary_line(&report);
    let rel = (model - mean).abs() / mean;
    outcome(
        rel <= 0.25,
        format!(
            "model MAD {model:.4} vs mean predictor {mean:.4} ({:+.1}%), {:.1?}",
            100.0 * (model - mean) / mean,
            start.elapsed()
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; nothing to list here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 sparse-rep oracle equivalence", c1_sparse_oracle),
        ("2 KKT certification", c2_kkt),
        ("3 Gram closed form vs quadrature", c3_gram),
        ("4 alternating-minimization monotonicity", c4_monotone),
        ("5 planted-model recovery", c5_planted),
        ("6 degenerate-case reductions", c6_degenerate),
        ("7 fused-penalty limit", c7_fused_limit),
        ("8 oracle dominance", c8_dominance),
        ("9 pipeline shape fidelity", c9_pipeline),
        ("10 null-model sanity", c10_null),
    ];
    // SPECTENSOR_CRITERIA=2,7 runs a subset
    let only: Option<Vec<String>> = std::env::var("SPECTENSOR_CRITERIA")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let mut failures = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        let id = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|s| s == id)) {
            continue;
        }
        ran += 1;
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
