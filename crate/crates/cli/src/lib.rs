//! The `mixgap` command-line front end.
//!
//! Reports are JSON on stdout (or `--output`); failures print a JSON object
//! `{"error": CODE, "message": ...}` on stderr. Exit status is 0 on success,
//! 2 for typed domain errors and 1 for I/O, parse and usage errors.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mixgap::confidence::{confidence_interval, ConfidenceConfig, DEFAULT_C};
use mixgap::eigen::{EigenConfig, LanczosConfig, DEFAULT_DENSE_THRESHOLD};
use mixgap::estimators::{
    gamma_dps_hat, gamma_ps_adaptive_multiplicative, gamma_ps_additive, gamma_ps_amplified,
    gamma_ps_prefix_hat, pi_star_hat, EstimateReport, EstimatorConfig,
};
use mixgap::oracle::{spectral_report, verify_lemma_properties, OracleConfig};
use mixgap::{fixtures, io as mio, MixError, Start, StochasticMatrix, Trajectory};

pub mod bench;

/// Default smoothing parameter.
pub const DEFAULT_ALPHA: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "mixgap", version, about = "Spectral mixing parameters of Markov chains from a single trajectory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Lanczos iteration cap.
    #[arg(long, global = true, default_value_t = 300)]
    pub lanczos_iters: usize,
    /// Lanczos Ritz residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub lanczos_tol: f64,
    /// Matrices up to this size use the dense eigensolver.
    #[arg(long, global = true, default_value_t = DEFAULT_DENSE_THRESHOLD)]
    pub eig_dense_threshold: usize,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

impl GlobalOpts {
    pub fn eigen(&self) -> EigenConfig {
        EigenConfig {
            lanczos: LanczosConfig {
                max_iter: self.lanczos_iters,
                tol: self.lanczos_tol,
                reorthogonalize: true,
                seed: self.seed,
            },
            dense_threshold: self.eig_dense_threshold,
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            eigen: self.eigen(),
            ..EstimatorConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct MatrixSource {
    /// Transition matrix file (CSV or JSON).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Built-in chain: skewed-cycle, random5a, random5b or fast3.
    #[arg(long)]
    pub fixture: Option<String>,
}

impl MatrixSource {
    pub fn load(&self) -> Result<StochasticMatrix, CliError> {
        match (&self.matrix, &self.fixture) {
            (Some(path), _) => Ok(mio::parse_matrix(&read_text(path)?)?),
            (None, Some(name)) => fixtures::by_name(name)
                .ok_or_else(|| CliError::Usage(format!("unknown fixture {name:?}"))),
            (None, None) => Err(CliError::Usage("a matrix source is required".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrajectorySource {
    /// Trajectory file (text or binary); `-` or absent reads stdin.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Size of the state space; defaults to the largest observed state plus one.
    #[arg(long)]
    pub states: Option<usize>,
}

impl TrajectorySource {
    pub fn load(&self) -> Result<Trajectory, CliError> {
        let bytes = match &self.trajectory {
            Some(p) if p.as_os_str() != "-" => {
                fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
            }
            _ => {
                let mut buf = Vec::new();
                io::stdin()
                    .read_to_end(&mut buf)
                    .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
                buf
            }
        };
        Ok(mio::parse_trajectory(&bytes, self.states)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    PiStar,
    PsPrefix,
    PsAdditive,
    PsAmplified,
    PsAdaptive,
    Dps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryFormat {
    Text,
    Binary,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory from a transition matrix.
    Simulate {
        #[command(flatten)]
        source: MatrixSource,
        /// Trajectory length.
        #[arg(long)]
        m: usize,
        /// Initial state, or `stationary`.
        #[arg(long, default_value = "stationary")]
        start: String,
        #[arg(long, value_enum, default_value = "text")]
        format: TrajectoryFormat,
    },
    /// Skipped-chain tallies as JSON.
    Stats {
        #[command(flatten)]
        input: TrajectorySource,
        /// Skip rate.
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Point estimate as an EstimateReport JSON.
    Estimate {
        #[command(flatten)]
        input: TrajectorySource,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Prefix bound (ps-prefix requires it; dps uses the adaptive bound when absent).
        #[arg(long = "K")]
        k: Option<usize>,
    },
    /// Empirical confidence interval as a ConfidenceReport JSON.
    Interval {
        #[command(flatten)]
        input: TrajectorySource,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Replaces the constant in the T term.
        #[arg(long)]
        c_override: Option<f64>,
        /// Also write the per-k terms as CSV.
        #[arg(long)]
        terms_csv: Option<PathBuf>,
    },
    /// Exact gaps and mixing time of a known chain.
    Oracle {
        #[command(flatten)]
        source: MatrixSource,
        #[arg(long, default_value_t = OracleConfig::default().k_cap)]
        k_cap: usize,
        #[arg(long, default_value_t = 0.25)]
        tv_threshold: f64,
    },
    /// Convergence and coverage table as CSV.
    Bench {
        #[command(flatten)]
        source: MatrixSource,
        /// Comma-separated trajectory lengths.
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        m_grid: Vec<usize>,
        /// Trials per length.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long)]
        c_override: Option<f64>,
    },
    /// Checks the skipped-gap inequalities on a known chain.
    LemmaCheck {
        #[command(flatten)]
        source: MatrixSource,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] MixError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Domain(e) => e.code(),
            CliError::Io(_) => "IO_ERROR",
            CliError::Usage(_) => "USAGE_ERROR",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(e) if !e.is_parse() => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.code(), "message": self.to_string() }).to_string()
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn emit_json(out: &Option<PathBuf>, value: &impl Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    emit(out, s.as_bytes())
}

fn parse_start(s: &str) -> Result<Start, CliError> {
    if s == "stationary" {
        return Ok(Start::Stationary);
    }
    s.parse::<usize>()
        .map(Start::State)
        .map_err(|_| CliError::Usage(format!("--start must be a state index or `stationary`, got {s:?}")))
}

fn require<T>(v: Option<T>, flag: &str, method: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--method {method} requires {flag}")))
}

/// The scalar estimate wrapped as a report so every method emits the same shape.
fn pi_star_report(value: f64) -> EstimateReport {
    EstimateReport {
        estimator: "pi-star".into(),
        value,
        k_used: 1,
        per_k_values: Default::default(),
        k_star: None,
        diagnostics: Default::default(),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    g.eigen().lanczos.validate()?;
    match cli.command {
        Command::Simulate {
            source,
            m,
            start,
            format,
        } => {
            let p = source.load()?;
            let tr = mixgap::simulate(&p, m, &parse_start(&start)?, g.seed)?;
            let mut buf = Vec::new();
            match format {
                TrajectoryFormat::Text => mio::write_trajectory_text(&tr, &mut buf),
                TrajectoryFormat::Binary => mio::write_trajectory_binary(&tr, &mut buf),
            }
            .map_err(|e| CliError::Io(e.to_string()))?;
            emit(&g.output, &buf)
        }
        Command::Stats { input, k } => {
            let tr = input.load()?;
            emit_json(&g.output, &mixgap::tally(&tr, k)?)
        }
        Command::Estimate {
            input,
            method,
            epsilon,
            alpha,
            k,
        } => {
            let tr = input.load()?;
            let cfg = g.estimator();
            let report = match method {
                Method::PiStar => pi_star_report(pi_star_hat(&tr)?),
                Method::PsPrefix => gamma_ps_prefix_hat(&tr, require(k, "--K", "ps-prefix")?, &cfg)?,
                Method::PsAdditive => {
                    gamma_ps_additive(&tr, require(epsilon, "--epsilon", "ps-additive")?, &cfg)?
                }
                Method::PsAmplified => gamma_ps_amplified(&tr, &cfg)?,
                Method::PsAdaptive => gamma_ps_adaptive_multiplicative(
                    &tr,
                    require(epsilon, "--epsilon", "ps-adaptive")?,
                    &cfg,
                )?,
                Method::Dps => gamma_dps_hat(&tr, alpha, k, &cfg)?,
            };
            emit_json(&g.output, &report)
        }
        Command::Interval {
            input,
            delta,
            alpha,
            c_override,
            terms_csv,
        } => {
            let tr = input.load()?;
            let cfg = ConfidenceConfig {
                c: c_override.unwrap_or(DEFAULT_C),
                estimator: g.estimator(),
                oracle: OracleConfig::default(),
            };
            let report = confidence_interval(&tr, alpha, delta, &cfg)?;
            if let Some(path) = terms_csv {
                write_terms_csv(&path, &report)?;
            }
            emit_json(&g.output, &report)
        }
        Command::Oracle {
            source,
            k_cap,
            tv_threshold,
        } => {
            let p = source.load()?;
            let cfg = OracleConfig {
                k_cap,
                tv_threshold,
                ..OracleConfig::default()
            };
            emit_json(&g.output, &spectral_report(&p, &cfg)?)
        }
        Command::Bench {
            source,
            m_grid,
            seeds,
            alpha,
            delta,
            c_override,
        } => {
            let p = source.load()?;
            let spec = bench::BenchSpec {
                m_grid,
                seeds,
                alpha,
                delta,
                c: c_override.unwrap_or(DEFAULT_C),
                base_seed: g.seed,
                estimator: g.estimator(),
            };
            let rows = bench::run_with_env_threads(&p, &spec)?;
            emit(&g.output, &bench::to_csv(&rows)?)
        }
        Command::LemmaCheck { source, k_max } => {
            let p = source.load()?;
            emit_json(&g.output, &verify_lemma_properties(&p, k_max)?)
        }
    }
}

fn write_terms_csv(path: &Path, report: &mixgap::confidence::ConfidenceReport) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["k", "W", "V", "T", "U", "gamma_ps_smoothed"])
        .map_err(io_err)?;
    for (k, t) in &report.per_k_terms {
        let g = t.gamma_ps_smoothed.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            k.to_string(),
            t.w.to_string(),
            t.v.to_string(),
            t.t.to_string(),
            t.u.to_string(),
            g,
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
