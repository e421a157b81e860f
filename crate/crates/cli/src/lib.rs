//! Command-line front end for `spectensor`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    NonConvergence(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::NonConvergence(m) => write!(f, "did not converge: {m}"),
        }
    }
}

impl From<spectensor::Error> for CliError {
    fn from(e: spectensor::Error) -> Self {
        match e {
            spectensor::Error::Divergence { .. } => CliError::NonConvergence(e.to_string()),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "spectensor", version, about = "Sparse kernel representations and rank-one regression for spectroscopy tensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed.
    #[arg(long, env = "SPECTENSOR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for batch operations (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Lorentzian kernel width, in wavenumber units.
    #[arg(long, default_value_t = spectensor::pipeline::DEFAULT_WIDTH)]
    pub width: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_h: f64,
    #[arg(long = "lambda-1", default_value_t = 0.01)]
    pub lambda_1: f64,
    /// KKT tolerance relative to the spectrum's max value.
    #[arg(long, default_value_t = 1e-7)]
    pub rep_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub rep_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    Weighted,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    MaxAmplitude,
    SourceEnergy,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct CovariateArgs {
    /// Gram-transformed covariates written by `preprocess`.
    #[arg(long)]
    pub xtilde: Option<PathBuf>,
    /// Sparse coefficients written by `fit-rep`.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    /// Wavenumber selection written by `score`.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = NormalizationArg::MaxAmplitude)]
    pub normalization: NormalizationArg,
    /// `closed-form` or `quadrature:LO:HI`.
    #[arg(long, default_value = "closed-form")]
    pub gram_mode: String,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Sets all four κ at once; individual flags override it.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub kappa_alpha: Option<f64>,
    #[arg(long)]
    pub kappa_beta: Option<f64>,
    #[arg(long)]
    pub kappa_gamma: Option<f64>,
    #[arg(long)]
    pub kappa_gram: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_outer: f64,
    /// Drop fused-penalty edges below this fraction of the largest Gram entry.
    #[arg(long, default_value_t = spectensor::rank_one::DEFAULT_PRUNE_REL)]
    pub prune_rel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Mean,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorArg {
    Alpha,
    Beta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic spectra with a planted response.
    Simulate {
        #[arg(long, default_value_t = 37)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// `LO:HI:COUNT` or a file of wavenumbers.
        #[arg(long, default_value = "954:1700:544")]
        grid: String,
        #[arg(long, default_value_t = 0.01)]
        sigma_spec: f64,
        /// Response noise as a signal-to-noise ratio in dB.
        #[arg(long, default_value_t = 20.0, conflicts_with = "sigma_resp")]
        snr_db: f64,
        #[arg(long)]
        sigma_resp: Option<f64>,
        /// Response independent of the spectra.
        #[arg(long)]
        null: bool,
        /// Comma-separated group labels assigned in rotation.
        #[arg(long)]
        groups: Option<String>,
        #[arg(long, default_value_t = spectensor::selection::DEFAULT_KEEP)]
        keep: usize,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit sparse kernel representations to every spectrum.
    FitRep {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Score wavenumbers and select the top N.
    Score {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = spectensor::selection::DEFAULT_KEEP)]
        keep: usize,
        #[arg(long, value_enum, default_value_t = ScoreModeArg::Weighted)]
        mode: ScoreModeArg,
        #[command(flatten)]
        common: Common,
    },
    /// Truncate or subsample raw spectra, or build normalized covariates
    /// from coefficients and a selection.
    Preprocess {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        truncate: Option<f64>,
        #[arg(long)]
        subsample: Option<usize>,
        #[command(flatten)]
        covariates: CovariateArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the rank-one regression model.
    Fit {
        #[command(flatten)]
        covariates: CovariateArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Predict responses with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validate over a grid of regularization parameters.
    Cv {
        #[command(flatten)]
        covariates: CovariateArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Fixed)]
        policy: PolicyArg,
        #[arg(long, default_value_t = spectensor::eval::DEFAULT_BATCHES)]
        batches: usize,
        /// Test samples per group when every sample has a group.
        #[arg(long, default_value_t = 2)]
        test_per_group: usize,
        /// Test samples per batch otherwise (default: 6/32 of the samples).
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long, value_enum, default_value_t = MetricArg::Median)]
        metric: MetricArg,
        /// Keep all samples of one unit on the same side of each split.
        #[arg(long)]
        group_exclusive: bool,
        /// κ exponents `LO:HI:COUNT` (base 10), κ_α = κ_β and κ_γ = κ_Γ tied.
        #[arg(long, default_value = "-4:1:5", allow_hyphen_values = true)]
        kappa_grid: String,
        /// Use the full four-way product of the exponent grid.
        #[arg(long)]
        full_grid: bool,
        #[arg(long, default_value_t = spectensor::baselines::DEFAULT_PEAK_NUM)]
        peak_num: f64,
        #[arg(long, default_value_t = spectensor::baselines::DEFAULT_PEAK_DEN)]
        peak_den: f64,
        /// Fit the ratio regression through the origin.
        #[arg(long)]
        no_intercept: bool,
        #[arg(long, default_value_t = spectensor::eval::DEFAULT_OUTLIER_C)]
        outlier_c: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a comparison predictor.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        /// Any tensor with responses (mean), or sparse coefficients (ratio).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = spectensor::baselines::DEFAULT_PEAK_NUM)]
        peak_num: f64,
        #[arg(long, default_value_t = spectensor::baselines::DEFAULT_PEAK_DEN)]
        peak_den: f64,
        #[arg(long)]
        no_intercept: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a per-sample covariate within equal-width response bands.
    BandSummary {
        #[arg(long)]
        data: PathBuf,
        /// Covariate: mean over sources and detectors at this wavenumber.
        #[arg(long, conflicts_with = "predictions")]
        wavenumber: Option<f64>,
        /// Covariate: the prediction column of a `predict` output.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, default_value_t = spectensor::eval::DEFAULT_BANDS)]
        bands: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Render a figure as SVG.
    Plot {
        /// scatter_pred_vs_actual, error_scatter, coeff_boxplot,
        /// spectrum_fit, scores or band_summary.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        input: PathBuf,
        /// Raw spectra to overlay on a spectrum fit.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        source: usize,
        #[arg(long, default_value_t = 0)]
        detector: usize,
        #[arg(long, value_enum, default_value_t = FactorArg::Alpha)]
        factor: FactorArg,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::FitRep { common, .. }
            | Command::Score { common, .. }
            | Command::Preprocess { common, .. }
            | Command::Fit { common, .. }
            | Command::Predict { common, .. }
            | Command::Cv { common, .. }
            | Command::Baseline { common, .. }
            | Command::BandSummary { common, .. }
            | Command::Plot { common, .. } => common,
        }
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.command.common().threads {
        if t == 0 {
            eprintln!("usage error: --threads must be positive");
            return EXIT_USAGE;
        }
        // only the first pool configuration in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}
