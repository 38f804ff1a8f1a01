use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use rotsdr::cert::{CertificateRecord, TightnessReport};
use rotsdr::experiments::{
    assess, di_summary, eigengap_summary, regime_thresholds, run_fig_di, run_fig_eigengap, run_fig_ratio,
    run_tightness_battery, with_jobs, write_csv, write_json, write_ratio_rows, BatteryConfig, BatteryRegime, Outliers,
    SigmaSummary,
};
use rotsdr::sdr::yc::{assemble_big_q_yc, solve_sdr_yc};
use rotsdr::sdr::{assemble_big_q, solve_sdr, SdrSummary, SolverOptions};
use rotsdr::synth::{gen_instance, GenConfig, Instance, NoiseModel, OutlierSpec};
use rotsdr::tls::{tls_by_classification, TruncationParams};

#[derive(Parser, Debug)]
#[command(name = "rot-sdr", version, about = "Robust rotation search: TLS, its semidefinite relaxation and tightness certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance.
    Generate(GenerateArgs),
    /// Solve the relaxation of an instance.
    Solve(SolveArgs),
    /// Certify or refute tightness of an instance under a regime.
    Certify(CertifyArgs),
    /// Run a tightness battery.
    Battery(BatteryArgs),
    /// Eigengap of the summed data matrices against noise level.
    FigEigengap(FigNoiseArgs),
    /// |d_1| against the comparison term, against noise level.
    FigDi(FigNoiseArgs),
    /// Spectral ratio of the summed noiseless data matrices.
    FigRatio(FigRatioArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutlierKind {
    None,
    RandomGaussian,
    RandomSphere,
    Clustered,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Generation config (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ell: Option<usize>,
    /// Number of inliers; defaults to ell.
    #[arg(long)]
    kstar: Option<usize>,
    /// Gaussian noise level of the inliers.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    outliers: Option<OutlierKind>,
    /// |w_cl . w*| for clustered outliers.
    #[arg(long, default_value_t = 0.9)]
    dot: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Clean,
    #[value(alias = "small_c", alias = "outliers_small_c")]
    SmallC,
    #[value(alias = "large_c")]
    LargeC,
    Clustered,
    Noisy,
    #[value(alias = "noisy_outliers")]
    NoisyOutliers,
    Gap,
}

impl From<RegimeArg> for BatteryRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Clean => BatteryRegime::Clean,
            RegimeArg::SmallC => BatteryRegime::SmallC,
            RegimeArg::LargeC => BatteryRegime::LargeC,
            RegimeArg::Clustered => BatteryRegime::Clustered,
            RegimeArg::Noisy => BatteryRegime::Noisy,
            RegimeArg::NoisyOutliers => BatteryRegime::NoisyOutliers,
            RegimeArg::Gap => BatteryRegime::Gap,
        }
    }
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// Regime whose threshold policy applies.
    #[arg(long, value_enum, default_value = "clean")]
    regime: RegimeArg,
    /// Uniform c^2 for every pair, overriding the regime policy.
    #[arg(long)]
    c_sq: Option<f64>,
    /// c^2 of noiseless inliers.
    #[arg(long, default_value_t = 1.0)]
    c_inlier: f64,
    /// Multiplier on the noisy-condition right-hand side.
    #[arg(long, default_value_t = 1.1)]
    headroom: f64,
}

impl ThresholdArgs {
    fn policy(&self) -> BatteryConfig {
        BatteryConfig {
            c_inlier: self.c_inlier,
            headroom: self.headroom,
            ..BatteryConfig::new(self.regime.into())
        }
    }

    fn thresholds(&self, inst: &Instance<f64>) -> anyhow::Result<TruncationParams<f64>> {
        Ok(match self.c_sq {
            Some(c) => TruncationParams::uniform(c, inst.ell)?,
            None => regime_thresholds(&self.policy(), inst)?,
        })
    }
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Solver options (JSON); flags override its values.
    #[arg(long)]
    solver_config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn options(&self, base: SolverOptions) -> anyhow::Result<SolverOptions> {
        let mut o = match &self.solver_config {
            Some(p) => SolverOptions::from_json(&read(p)?)?,
            None => base,
        };
        if let Some(t) = self.tol {
            o.tol = t;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        o.validate()?;
        Ok(o)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Relaxation {
    Sdr,
    Yc,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long, value_enum, default_value = "sdr")]
    relaxation: Relaxation,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BatteryArgs {
    /// Battery config (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long, value_delimiter = ',')]
    ells: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Outlier fractions of ell.
    #[arg(long, value_delimiter = ',', conflicts_with = "outlier_counts")]
    outlier_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    outlier_counts: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run the relaxation solver on every instance.
    #[arg(long)]
    solve: bool,
    /// Also solve the redundant-constraint relaxation and compare verdicts.
    #[arg(long)]
    compare_yc: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV of per-instance rows.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON summary; printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FigNoiseArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1")]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    ell: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
    /// JSON of per-sigma medians; printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FigRatioArgs {
    #[arg(long, value_delimiter = ',', default_value = "100")]
    ells: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Raised after outputs are written when the solver stopped early.
#[derive(Debug)]
struct NotConverged(usize);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "solver did not converge within {} iterations", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn read(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn emit<S: Serialize>(value: &S, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => write_json(p, value)?,
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn load_instance(p: &Path) -> anyhow::Result<Instance<f64>> {
    Instance::from_json(&read(p)?).with_context(|| format!("parsing instance {}", p.display()))
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?).context("parsing generation config")?,
        None => GenConfig::default(),
    };
    if let Some(ell) = a.ell {
        cfg.ell = ell;
        if a.kstar.is_none() && a.config.is_none() {
            cfg.kstar = ell;
        }
    }
    if let Some(k) = a.kstar {
        cfg.kstar = k;
    }
    if let Some(s) = a.sigma {
        cfg.noise = if s > 0.0 { NoiseModel::Gaussian { sigma: s } } else { NoiseModel::None };
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.outliers {
        cfg.outliers = match o {
            OutlierKind::None => OutlierSpec::None,
            OutlierKind::RandomGaussian => OutlierSpec::RandomGaussian,
            OutlierKind::RandomSphere => OutlierSpec::RandomSphere,
            OutlierKind::Clustered => OutlierSpec::ClusteredDot { dot: a.dot },
        };
    }
    let inst = gen_instance::<f64>(&cfg)?;
    let json = inst.to_json()?;
    match &a.output {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn solve(a: SolveArgs) -> anyhow::Result<()> {
    let inst = load_instance(&a.input)?;
    let qs = inst.data_matrices();
    let c = a.thresholds.thresholds(&inst)?;
    let opts = a.solver.options(SolverOptions::default())?;
    let sol = match a.relaxation {
        Relaxation::Sdr => solve_sdr(&assemble_big_q(&qs, &c)?, &c, &opts)?,
        Relaxation::Yc => {
            let (qp, q) = assemble_big_q_yc(&qs, &c)?;
            solve_sdr_yc(&qp, &q, &c, &opts)?
        }
    };
    info!("solver stopped after {} iterations", sol.iterations);
    let inliers: Vec<usize> = (0..inst.kstar).collect();
    let tls = tls_by_classification(&qs, &c, &inliers)?.value;
    emit(&SdrSummary::new(&sol, Some(tls)), a.output.as_deref())?;
    if !sol.converged {
        return Err(NotConverged(sol.iterations).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct CertifyOutput {
    regime: BatteryRegime,
    verdict: rotsdr::cert::Verdict,
    tls_value: f64,
    c_sq: Vec<f64>,
    /// Clustered regime: `|w_cl . w*|` and the closed-form violation.
    cluster: Option<(f64, f64)>,
    report: TightnessReport<f64>,
    certificate: CertificateRecord,
}

fn certify(a: CertifyArgs) -> anyhow::Result<()> {
    let inst = load_instance(&a.input)?;
    let c = a.thresholds.thresholds(&inst)?;
    let regime: BatteryRegime = a.thresholds.regime.into();
    let out = assess(regime, &inst, &c)?;
    emit(
        &CertifyOutput {
            regime,
            verdict: out.report.verdict,
            tls_value: out.candidate.value,
            c_sq: c.as_slice().to_vec(),
            cluster: out.cluster,
            report: out.report,
            certificate: out.certificate.record(),
        },
        a.output.as_deref(),
    )
}

fn battery(a: BatteryArgs) -> anyhow::Result<()> {
    let mut cfg: BatteryConfig = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?).context("parsing battery config")?,
        None => BatteryConfig::default(),
    };
    if let Some(r) = a.regime {
        cfg.regime = r.into();
    }
    if let Some(v) = a.ells {
        cfg.ells = v;
    }
    if let Some(v) = a.sigmas {
        cfg.sigmas = v;
    }
    if let Some(v) = a.outlier_rates {
        cfg.outliers = v.into_iter().map(Outliers::Rate).collect();
    }
    if let Some(v) = a.outlier_counts {
        cfg.outliers = v.into_iter().map(Outliers::Count).collect();
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.solve |= a.solve || a.compare_yc;
    cfg.compare_yc |= a.compare_yc;
    cfg.solver = a.solver.options(cfg.solver.clone())?;
    if let Some(p) = &a.output {
        cfg.csv = Some(p.display().to_string());
    }
    if let Some(p) = &a.summary {
        cfg.summary = Some(p.display().to_string());
    }
    let res = with_jobs(a.jobs, || run_tightness_battery(&cfg))??;
    info!("battery finished: {} rows", res.rows.len());
    if cfg.summary.is_none() {
        emit(&res.summary, None)?;
    }
    if res.summary.solver_non_converged > 0 {
        return Err(NotConverged(cfg.solver.max_iter).into());
    }
    Ok(())
}

fn fig_noise(a: FigNoiseArgs, eigengap: bool) -> anyhow::Result<()> {
    let summary: Vec<SigmaSummary> = with_jobs(a.jobs, || -> anyhow::Result<_> {
        Ok(if eigengap {
            let rows = run_fig_eigengap(&a.sigmas, a.ell, a.trials, a.seed)?;
            write_csv(&a.output, &rows)?;
            eigengap_summary(&rows)
        } else {
            let rows = run_fig_di(&a.sigmas, a.ell, a.trials, a.seed)?;
            write_csv(&a.output, &rows)?;
            di_summary(&rows)
        })
    })??;
    emit(&summary, a.summary.as_deref())
}

fn fig_ratio(a: FigRatioArgs) -> anyhow::Result<()> {
    let stats = with_jobs(a.jobs, || run_fig_ratio(&a.ells, a.trials, a.seed))??;
    write_ratio_rows(&a.output, &stats)?;
    emit(&stats, a.summary.as_deref())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Certify(a) => certify(a),
        Command::Battery(a) => battery(a),
        Command::FigEigengap(a) => fig_noise(a, true),
        Command::FigDi(a) => fig_noise(a, false),
        Command::FigRatio(a) => fig_ratio(a),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<NotConverged>().is_some() {
        return 3;
    }
    match e.downcast_ref::<rotsdr::Error>() {
        Some(rotsdr::Error::RegimeMismatch(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROT_SDR_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
