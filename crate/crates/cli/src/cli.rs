use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use infobell::inference::{
    find_plan, plan_grid, significance, write_plan_csv, DecisionPlan, HypothesisProbs, TailReading, VerdictMode,
    DEFAULT_N_MAX,
};
use infobell::quantum::{crossing_angle, curve, max_quantum_deficit, violation_fraction, write_curve_csv};
use infobell::session::{analyze_session, parse_session_csv, write_deficits_csv, AnalysisConfig, SessionSummary};
use infobell::simulate::{enumerate_exact, ExactRatio};
use infobell::campaign::run_campaign_with_threads;
use infobell::{run_campaign, CampaignConfig, CaseKind, Estimator, SelectionDomain};
use serde::Serialize;

use crate::api;

#[derive(Debug, Parser)]
#[command(name = "infobell", version, about = "Information Bell deficits: simulation, planning and session analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded Monte Carlo campaign and print its statistics.
    Simulate(SimulateArgs),
    /// Enumerate a generator's whole sample space exactly.
    Enumerate(EnumerateArgs),
    /// Quantum deficit curve as CSV.
    Curve(CurveArgs),
    /// Minimal experiment count and acceptance threshold.
    Plan(PlanArgs),
    /// Probability of k_e or more exceedances under H0.
    Tail(TailArgs),
    /// Analyze a session CSV and print the verdict.
    Analyze(AnalyzeArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct HypothesisArgs {
    /// Positive-deficit probability under H0.
    #[arg(long, default_value_t = 0.012)]
    pub p0: f64,
    /// Positive-deficit probability under H1.
    #[arg(long, default_value_t = 0.85)]
    pub p1: f64,
    /// Significance level.
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// Required power.
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: u64,
}

impl HypothesisArgs {
    pub fn probs(&self) -> Result<HypothesisProbs, CliError> {
        HypothesisProbs::new(self.p0, self.p1).map_err(CliError::usage)
    }

    pub fn plan(&self) -> Result<DecisionPlan, CliError> {
        let probs = self.probs()?;
        find_plan(probs, self.alpha, self.gamma, self.n_max).map_err(CliError::usage)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// stochastic (alias random) or anticorrelated (alias anti).
    #[arg(long, default_value = "stochastic")]
    pub case: CaseKind,
    #[arg(long, default_value_t = 12)]
    pub outcomes: usize,
    #[arg(long, default_value_t = 10_000)]
    pub experiments: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// three or four selectable column pairs.
    #[arg(long, default_value = "three")]
    pub selection: SelectionDomain,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// canonical, full-columns or split, optionally with +marginal.
    #[arg(long, default_value = "canonical")]
    pub estimator: Estimator,
    /// Per-experiment deficits CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long, default_value = "stochastic")]
    pub case: CaseKind,
    #[arg(long, default_value_t = 3)]
    pub outcomes: usize,
    #[arg(long, default_value = "three")]
    pub selection: SelectionDomain,
    #[arg(long, default_value = "canonical")]
    pub estimator: Estimator,
    /// Include the full deficit distribution.
    #[arg(long)]
    pub distribution: bool,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Degrees.
    #[arg(long, default_value_t = 0.0)]
    pub min: f64,
    #[arg(long, default_value_t = 180.0)]
    pub max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print violation fraction, crossing angle and maximum as JSON instead.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub hypotheses: HypothesisArgs,
    /// Emit a grid of plans as CSV.
    #[arg(long)]
    pub table: bool,
    /// Grid significance levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "5,1,0.5,0.1")]
    pub alphas: Vec<f64>,
    /// Grid power levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "80,90,95,99")]
    pub gammas: Vec<f64>,
    /// Also report size and power of the plan.
    #[arg(long)]
    pub detail: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    /// Observed exceedances.
    #[arg(long)]
    pub k: u64,
    #[arg(long)]
    pub experiments: u64,
    #[arg(long, default_value_t = 0.012)]
    pub p0: f64,
    /// at-least or more-than.
    #[arg(long, default_value = "at-least")]
    pub reading: TailReading,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Session CSV; standard input when absent or "-".
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub hypotheses: HypothesisArgs,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value = "three")]
    pub selection: SelectionDomain,
    #[arg(long, default_value = "canonical")]
    pub estimator: Estimator,
    /// early or conservative.
    #[arg(long, default_value = "early")]
    pub mode: VerdictMode,
    #[arg(long, default_value = "at-least")]
    pub reading: TailReading,
    /// Write the summary JSON here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl AnalyzeArgs {
    pub fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            delta: self.delta,
            selection_domain: self.selection,
            estimator: self.estimator,
            mode: self.mode,
            tail: self.reading,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Concurrent simulation jobs.
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    /// Estimator for stateless endpoints.
    #[arg(long, default_value = "canonical")]
    pub estimator: Estimator,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(infobell::Error),
}

impl CliError {
    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<infobell::Error> for CliError {
    fn from(e: infobell::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Curve(a) => curve_cmd(a),
        Command::Plan(a) => plan(a),
        Command::Tail(a) => tail(a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(a),
    }
}

/// Writes a rendered document to `path` or standard output. A reader closing
/// the pipe early is not an error.
fn emit(bytes: &[u8], path: Option<&PathBuf>) -> Result<(), CliError> {
    let r = match path {
        Some(p) => std::fs::write(p, bytes),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush())
        }
    };
    match r {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    let mut buf = serde_json::to_vec(value).map_err(|e| infobell::Error::Io(e.to_string()))?;
    buf.push(b'\n');
    emit(&buf, out)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let config = CampaignConfig {
        case: a.case,
        n: a.outcomes,
        experiments: a.experiments,
        master_seed: a.seed,
        domain: a.selection,
        delta: a.delta,
        estimator: a.estimator,
    };
    config.validate().map_err(CliError::usage)?;
    let report = match a.threads {
        Some(t) => run_campaign_with_threads(&config, t)?,
        None => run_campaign(&config)?,
    };
    if let Some(path) = &a.output {
        let mut w = BufWriter::new(File::create(path)?);
        write_deficits_csv(&report.results, &mut w)?;
        w.flush()?;
    }
    print_json(&report, None)
}

#[derive(Serialize)]
struct EnumerationReport {
    estimator_variant: String,
    case: CaseKind,
    n: usize,
    selection_domain: SelectionDomain,
    total: u64,
    positive: u64,
    zero: u64,
    negative: u64,
    p_strict_positive: ExactRatio,
    p_zero: ExactRatio,
    p_negative: ExactRatio,
    p_rank: ExactRatio,
    max_deficit: f64,
    min_deficit: f64,
    mean_positive: Option<f64>,
    support_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<(f64, u64)>>,
}

fn enumerate(a: EnumerateArgs) -> Result<(), CliError> {
    if a.outcomes == 0 {
        return Err(CliError::usage("--outcomes must be at least 1"));
    }
    let s = enumerate_exact(a.case, a.outcomes, a.selection, &a.estimator)?;
    let report = EnumerationReport {
        estimator_variant: a.estimator.variant_name(),
        case: a.case,
        n: a.outcomes,
        selection_domain: a.selection,
        total: s.total,
        positive: s.positive,
        zero: s.zero,
        negative: s.negative,
        p_strict_positive: s.p_strict_positive(),
        p_zero: s.p_zero(),
        p_negative: s.p_negative(),
        p_rank: s.p_rank(),
        max_deficit: s.max_deficit,
        min_deficit: s.min_deficit,
        mean_positive: s.mean_positive(),
        support_size: s.support_size(),
        distribution: a.distribution.then(|| s.distribution.clone()),
    };
    print_json(&report, None)
}

#[derive(Serialize)]
struct CurveSummary {
    theta_min: f64,
    theta_max: f64,
    step: f64,
    violation_fraction: f64,
    crossing_angle: f64,
    max_theta: f64,
    max_deficit: f64,
}

fn curve_cmd(a: CurveArgs) -> Result<(), CliError> {
    if a.summary {
        let max = max_quantum_deficit();
        let value = CurveSummary {
            theta_min: a.min,
            theta_max: a.max,
            step: a.step,
            violation_fraction: violation_fraction(a.min, a.max, a.step).map_err(CliError::usage)?,
            crossing_angle: crossing_angle(1e-10)?,
            max_theta: max.theta,
            max_deficit: max.deficit,
        };
        return print_json(&value, a.output.as_ref());
    }
    let points = curve(a.min, a.max, a.step).map_err(CliError::usage)?;
    let mut buf = Vec::new();
    write_curve_csv(&points, &mut buf)?;
    emit(&buf, a.output.as_ref())
}

#[derive(Serialize)]
struct PlanBrief {
    n_req: u64,
    k0: u64,
}

fn plan(a: PlanArgs) -> Result<(), CliError> {
    if a.table {
        let cells = plan_grid(a.hypotheses.probs()?, &a.alphas, &a.gammas, a.hypotheses.n_max).map_err(CliError::usage)?;
        let mut buf = Vec::new();
        write_plan_csv(&cells, &mut buf)?;
        return emit(&buf, a.output.as_ref());
    }
    let p = a.hypotheses.plan()?;
    if a.detail {
        print_json(&p, a.output.as_ref())
    } else {
        print_json(&PlanBrief { n_req: p.n_req, k0: p.k0 }, a.output.as_ref())
    }
}

#[derive(Serialize)]
struct TailReport {
    k_e: u64,
    experiments: u64,
    p0: f64,
    reading: TailReading,
    p_value: f64,
}

fn tail(a: TailArgs) -> Result<(), CliError> {
    let p = significance(a.k, a.experiments, a.p0, a.reading).map_err(CliError::usage)?;
    print_json(&TailReport { k_e: a.k, experiments: a.experiments, p0: a.p0, reading: a.reading, p_value: p }, None)
}

/// Parses a session CSV and evaluates it; shared by `analyze` and the tests
/// that compare it with live sessions.
pub fn analyze_csv<R: Read>(input: R, plan: &DecisionPlan, config: &AnalysisConfig) -> infobell::Result<SessionSummary> {
    let experiments = parse_session_csv(input)?;
    analyze_session(&experiments, plan, config)
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let config = a.config();
    config.validate().map_err(CliError::usage)?;
    let plan = a.hypotheses.plan()?;
    let summary = match a.input.as_ref().filter(|p| p.as_os_str() != "-") {
        Some(p) => analyze_csv(File::open(p)?, &plan, &config)?,
        None => analyze_csv(io::stdin().lock(), &plan, &config)?,
    };
    print_json(&summary, a.output.as_ref())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    if a.workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let state = api::AppState::new(&a.data_dir, a.workers, a.estimator)?;
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
