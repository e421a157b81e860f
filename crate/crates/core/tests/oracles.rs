use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectensor::kernel::{gram_matrix, gram_quadrature, kernel_matrix, GramMode, KernelSpec, SpectralGrid};
use spectensor::rank_one::fused::{AdmmConfig, FusedLassoProblem};
use spectensor::rank_one::group::{GroupConfig, NonnegGroupProblem};
use spectensor::sparse_rep::{SparseRepParams, SparseRepSolver};
use spectensor_oracles as oracle;

fn random_grid(rng: &mut ChaCha8Rng, len: usize, min_gap: f64, max_gap: f64) -> SpectralGrid {
    let mut t = rng.gen_range(0.0..500.0);
    let mut pts = Vec::with_capacity(len);
    for _ in 0..len {
        pts.push(t);
        t += rng.gen_range(min_gap..max_gap);
    }
    SpectralGrid::new(pts).unwrap()
}

fn random_design(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn sparse_rep_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..60 {
        let len = rng.gen_range(1..=8);
        let width = rng.gen_range(1.0..10.0);
        let grid = random_grid(&mut rng, len, 0.5, 3.0 * width);
        let kmat = kernel_matrix(&KernelSpec::lorentzian(width).unwrap(), &grid).unwrap();
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let params = SparseRepParams {
            lambda_h: rng.gen_range(1e-4..0.1),
            lambda_1: rng.gen_range(1e-4..0.1),
            ..SparseRepParams::default()
        };
        let fit = SparseRepSolver::new(&kmat, params).unwrap().fit(&data).unwrap();
        let best = oracle::sparse_rep_exhaustive(&kmat, &data, params.lambda_h, params.lambda_1);
        let ours = oracle::sparse_rep_objective(&kmat, &data, params.lambda_h, params.lambda_1, &fit.coeffs);
        let theirs = oracle::sparse_rep_objective(&kmat, &data, params.lambda_h, params.lambda_1, &best);
        assert!(ours <= theirs + 1e-10, "{ours} > {theirs}");
        for (a, b) in fit.coeffs.iter().zip(&best) {
            assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", fit.coeffs, best);
        }
    }
}

#[test]
fn group_block_matches_support_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let cols = rng.gen_range(1..=7);
        let design = random_design(&mut rng, 30, cols);
        let y: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = rng.gen_range(1e-4..0.5);
        let prob = NonnegGroupProblem::from_design(&design, &y, c);
        let sol = prob.solve(&vec![1.0; cols], &GroupConfig::default());
        let best = oracle::group_nonneg_oracle(&prob.q, &prob.b, prob.c);
        let x = DVector::from_column_slice(&sol.x);
        let ours = oracle::group_objective(&prob.q, &prob.b, prob.c, &x);
        let theirs = oracle::group_objective(&prob.q, &prob.b, prob.c, &best);
        assert!(ours <= theirs + 1e-9, "{ours} > {theirs}");
        assert!(oracle::group_kkt(&prob.q, &prob.b, prob.c, &x) <= 1e-6);
    }
}

#[test]
fn fused_block_matches_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let n = rng.gen_range(2..=10);
        let design = random_design(&mut rng, 40, n);
        let y: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.5) {
                    edges.push((a, b, rng.gen_range(0.0..0.05)));
                }
            }
        }
        let coord = rng.gen_range(0.0..0.05);
        let prob = FusedLassoProblem::from_design(&design, &y, coord, edges);
        let sol = prob.solve(&vec![0.0; n], &AdmmConfig::default());
        let best = oracle::fused_dual_oracle(&prob.q, &prob.b, prob.coord_weight, &prob.edges, 20_000);
        let x = DVector::from_column_slice(&sol.x);
        let ours = oracle::fused_objective(&prob.q, &prob.b, prob.coord_weight, &prob.edges, &x);
        let theirs = oracle::fused_objective(&prob.q, &prob.b, prob.coord_weight, &prob.edges, &best);
        assert!(ours <= theirs + 1e-8, "{ours} > {theirs}");
        assert!((&x - &best).amax() <= 1e-4);
    }
}

#[test]
fn fused_solver_reduces_to_lasso_without_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = rng.gen_range(2..=12);
        let design = random_design(&mut rng, 50, n);
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = rng.gen_range(1e-3..0.1);
        let prob = FusedLassoProblem::from_design(&design, &y, w, Vec::new());
        let sol = prob.solve(&vec![0.0; n], &AdmmConfig::default());
        let cd = oracle::lasso_cd(&prob.q, &prob.b, w, 20_000);
        assert!((DVector::from_column_slice(&sol.x) - cd).amax() <= 1e-6);
    }
}

#[test]
fn gram_quadrature_agrees_with_simpson() {
    let spec = KernelSpec::lorentzian(4.0).unwrap();
    for (a, b) in [(0.0, 0.0), (0.0, 3.0), (10.0, -7.5), (2.0, 40.0)] {
        let ours = gram_quadrature(&spec, a, b, -300.0, 300.0).unwrap();
        let reference = oracle::simpson(|t| spec.value(t, a) * spec.value(t, b), -300.0, 300.0, 200_000);
        assert!((ours - reference).abs() <= 1e-8 * reference.abs(), "{ours} vs {reference}");
    }
}

#[test]
fn closed_form_gram_is_limit_of_wide_quadrature() {
    let spec = KernelSpec::lorentzian(2.0).unwrap();
    let grid = SpectralGrid::new(vec![0.0, 1.5, 4.0, 9.0]).unwrap();
    let exact = gram_matrix(&spec, &grid, GramMode::ClosedFormRealLine).unwrap().entries;
    let wide = gram_matrix(&spec, &grid, GramMode::QuadratureInterval { lo: -2e4, hi: 2e4 })
        .unwrap()
        .entries;
    let rel = (&exact - &wide).amax() / exact.amax();
    assert!(rel <= 1e-4, "relative gap {rel}");
}
