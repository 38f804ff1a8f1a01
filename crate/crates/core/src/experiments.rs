//! Tightness batteries and figure pipelines. Every runner is deterministic in its seed
//! and independent of the number of worker threads.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{error_bound, ratio_experiment, write_ratio_csv, RatioStats};
use crate::cert::{
    avoids_extremes, cert_clean, cert_noisy, cert_outliers_small_c, check_noisy_condition, eigengap, noiseless_family,
    noisy_d, noisy_thresholds, refute_clustered, refute_large_c, verify_kkt, Certificate, TightnessReport, Verdict,
};
use crate::error::{invalid, Error, Result};
use crate::rotmath::{quat_angle, DataMatrix, UnitQuaternion};
use crate::sdr::yc::{assemble_big_q_yc, solve_sdr_yc};
use crate::sdr::{assemble_big_q, extract_quaternion, solve_sdr, solver_tight, SolverOptions};
use crate::synth::{gen_instance, GenConfig, Instance, OutlierSpec};
use crate::tls::{tls_by_classification, TlsSolution, TruncationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryRegime {
    /// Noiseless, no outliers.
    Clean,
    /// Noiseless with random outliers, `c_j² = small_c_factor·λ_min(Q_j)`.
    SmallC,
    /// Noiseless with outliers, `c_j² = large_c_factor·w*ᵀQ_jw*`.
    LargeC,
    /// Noiseless with outliers consistent with one wrong rotation.
    Clustered,
    /// Gaussian noise, no outliers, inlier thresholds from the noisy condition.
    Noisy,
    /// Gaussian noise with random outliers filtered by small `c_j²`.
    NoisyOutliers,
    /// Noiseless with `λ_min(Q_j) < c_j² < w*ᵀQ_jw*`; solver outcome only.
    Gap,
}

impl std::fmt::Display for BatteryRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// Amount of outliers in a grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outliers {
    /// Fraction of `ℓ`, rounded to the nearest count.
    Rate(f64),
    Count(usize),
}

impl Outliers {
    fn count(&self, ell: usize) -> usize {
        match *self {
            Outliers::Rate(r) => (r * ell as f64).round() as usize,
            Outliers::Count(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    pub regime: BatteryRegime,
    pub ells: Vec<usize>,
    /// Ignored by the outlier-free regimes.
    pub outliers: Vec<Outliers>,
    /// Ignored by the noiseless regimes.
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// `c²` of noiseless inliers.
    pub c_inlier: f64,
    /// Multiplier on the noisy-condition right-hand side.
    pub headroom: f64,
    pub small_c_factor: f64,
    pub large_c_factor: f64,
    /// `|w_clᵀw*|` is drawn uniformly from this interval.
    pub dot_band: [f64; 2],
    /// Run the relaxation solver on each instance.
    pub solve: bool,
    /// Also run the redundant-constraint relaxation and compare verdicts.
    pub compare_yc: bool,
    pub solver: SolverOptions,
    pub csv: Option<String>,
    pub summary: Option<String>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            regime: BatteryRegime::Clean,
            ells: vec![100],
            outliers: vec![Outliers::Rate(0.5)],
            sigmas: vec![0.01],
            trials: 100,
            seed: 0,
            c_inlier: 1.0,
            headroom: 1.1,
            small_c_factor: 0.5,
            large_c_factor: 2.0,
            dot_band: [0.8, 0.95],
            solve: false,
            compare_yc: false,
            solver: SolverOptions::default(),
            csv: None,
            summary: None,
        }
    }
}

/// One instance of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub ell: usize,
    pub kstar: usize,
    pub sigma: f64,
}

impl BatteryConfig {
    pub fn new(regime: BatteryRegime) -> Self {
        BatteryConfig { regime, ..Default::default() }
    }

    fn noisy(&self) -> bool {
        matches!(self.regime, BatteryRegime::Noisy | BatteryRegime::NoisyOutliers)
    }

    fn has_outliers(&self) -> bool {
        !matches!(self.regime, BatteryRegime::Clean | BatteryRegime::Noisy)
    }

    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let sigmas = if self.noisy() { self.sigmas.clone() } else { vec![0.0] };
        let outliers = if self.has_outliers() { self.outliers.clone() } else { vec![Outliers::Count(0)] };
        let mut g = Vec::new();
        for &ell in &self.ells {
            for o in &outliers {
                let n_out = o.count(ell);
                if self.has_outliers() && n_out == 0 {
                    return invalid(format!("{} needs at least one outlier at ell = {ell}", self.regime));
                }
                if n_out >= ell {
                    return invalid(format!("{n_out} outliers leave no inliers at ell = {ell}"));
                }
                for &sigma in &sigmas {
                    g.push(GridPoint { ell, kstar: ell - n_out, sigma });
                }
            }
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.grid()?.is_empty() {
            return invalid("empty instance grid");
        }
        if self.noisy() && self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return invalid("sigmas must be finite and nonnegative");
        }
        let [lo, hi] = self.dot_band;
        if self.regime == BatteryRegime::Clustered && !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return invalid(format!("dot band {lo}..{hi} must lie in [0, 1)"));
        }
        if !(self.c_inlier > 0.0 && self.headroom > 0.0 && self.small_c_factor > 0.0 && self.large_c_factor > 0.0) {
            return invalid("threshold factors must be positive");
        }
        if self.regime == BatteryRegime::Gap && !self.solve {
            return invalid("the gap regime needs solve = true");
        }
        self.solver.validate()
    }
}

/// One battery row. Fields a regime does not produce are left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub index: usize,
    pub trial: usize,
    pub seed: u64,
    pub ell: usize,
    pub kstar: usize,
    pub sigma: f64,
    /// Set when the instance falls outside the regime's hypotheses.
    pub mismatch: Option<String>,
    pub verdict: Option<Verdict>,
    pub o1: Option<f64>,
    pub o2: Option<f64>,
    pub o3: Option<f64>,
    pub witness_violation: Option<f64>,
    /// Clustered regime: `2Σcᵢ²(1 - |w_clᵀw*|) - Σc_j²`.
    pub closed_form: Option<f64>,
    pub cluster_dot: Option<f64>,
    /// TLS value of the candidate (the lift value at the candidate for refutations).
    pub tls_value: f64,
    pub tie_flag: bool,
    pub min_block_eig: Option<f64>,
    pub c_avoids_extremes: bool,
    pub zeta: Option<f64>,
    pub noisy_condition: Option<bool>,
    pub conjecture: Option<bool>,
    pub sin_sq_tau: Option<f64>,
    pub error_rhs: Option<f64>,
    pub error_holds: Option<bool>,
    pub solver_objective: Option<f64>,
    pub solver_converged: Option<bool>,
    pub rank1_ratio: Option<f64>,
    pub solver_tight: Option<bool>,
    /// `tls_value - solver_objective`.
    pub solver_gap: Option<f64>,
    /// Angle in radians between the extracted rotation and the ground truth.
    pub extraction_error: Option<f64>,
    pub yc_objective: Option<f64>,
    pub yc_converged: Option<bool>,
    pub yc_tight: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatterySummary {
    pub regime: Option<BatteryRegime>,
    pub rows: usize,
    pub mismatches: usize,
    pub certified_tight: usize,
    pub refuted: usize,
    pub inconclusive: usize,
    pub error_bound_holds: usize,
    pub error_bound_checked: usize,
    pub conjecture_holds: usize,
    pub solver_runs: usize,
    pub solver_non_converged: usize,
    pub solver_tight: usize,
    /// Fraction of solver runs that were not tight.
    pub non_tight_rate: Option<f64>,
    pub relaxations_agree: usize,
    pub relaxations_compared: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub config: BatteryConfig,
    pub rows: Vec<BatteryRow>,
    pub summary: BatterySummary,
}

/// SplitMix64 finaliser; spreads nearby indices over the seed space.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` on a dedicated pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(0) => invalid("jobs must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Instance and thresholds for one grid point, as a battery would build them.
pub fn battery_instance(
    config: &BatteryConfig,
    point: GridPoint,
    seed: u64,
) -> Result<(Instance<f64>, TruncationParams<f64>)> {
    let GridPoint { ell, kstar, sigma } = point;
    let gen = match config.regime {
        BatteryRegime::Clean => GenConfig::clean(ell, seed),
        BatteryRegime::Noisy => GenConfig::gaussian(ell, ell, sigma, seed),
        BatteryRegime::SmallC | BatteryRegime::LargeC | BatteryRegime::Gap => {
            GenConfig::gaussian(ell, kstar, 0.0, seed).with_outliers(OutlierSpec::RandomGaussian)
        }
        BatteryRegime::NoisyOutliers => {
            GenConfig::gaussian(ell, kstar, sigma, seed).with_outliers(OutlierSpec::RandomGaussian)
        }
        BatteryRegime::Clustered => {
            let [lo, hi] = config.dot_band;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
            let dot = if hi > lo { rng.random_range(lo..hi) } else { lo };
            GenConfig::gaussian(ell, kstar, 0.0, seed).with_outliers(OutlierSpec::ClusteredDot { dot })
        }
    };
    let inst = gen_instance::<f64>(&gen)?;
    let c = regime_thresholds(config, &inst)?;
    Ok((inst, c))
}

/// Thresholds the regime prescribes for `inst`, whose first `kstar` pairs are the
/// inliers. Noiseless inliers get `c_inlier`; noisy inliers get `headroom` times the
/// right-hand side of the noisy condition.
pub fn regime_thresholds(config: &BatteryConfig, inst: &Instance<f64>) -> Result<TruncationParams<f64>> {
    let kstar = inst.kstar;
    let qs = inst.data_matrices();
    let w = inst.w_star();
    let outlier_c = |q: &DataMatrix<f64>| match config.regime {
        BatteryRegime::LargeC => config.large_c_factor * q.residual(w.as_vec()),
        BatteryRegime::Gap => 0.5 * (q.lambda_min() + q.residual(w.as_vec())),
        BatteryRegime::Clustered => config.c_inlier,
        _ => config.small_c_factor * q.lambda_min(),
    };
    let mut c: Vec<f64> = if config.noisy() {
        noisy_thresholds(&qs, kstar, config.headroom)?
    } else {
        vec![config.c_inlier; kstar]
    };
    c.extend(qs[kstar..].iter().map(outlier_c));
    TruncationParams::new(c)
}

/// Outcome of certifying or refuting one instance under a regime.
#[derive(Clone, Debug, PartialEq)]
pub struct Assessment {
    pub report: TightnessReport<f64>,
    pub certificate: Certificate<f64>,
    /// Candidate from the true inlier set.
    pub candidate: TlsSolution<f64>,
    /// Clustered regime: `|w_clᵀw*|` and the closed-form violation.
    pub cluster: Option<(f64, f64)>,
}

/// Certificate (or noiseless family plus witness) for the regime, verified at the
/// candidate. Instances outside the regime's hypotheses give `RegimeMismatch`.
pub fn assess(
    regime: BatteryRegime,
    inst: &Instance<f64>,
    c: &TruncationParams<f64>,
) -> Result<Assessment> {
    let qs = inst.data_matrices();
    let kstar = inst.kstar;
    let inliers: Vec<usize> = (0..kstar).collect();
    let w_star = inst.w_star();
    let candidate = tls_by_classification(&qs, c, &inliers)?;
    let certificate = match regime {
        BatteryRegime::Clean => {
            if kstar != qs.len() {
                return Err(Error::RegimeMismatch(format!("clean regime but {} outliers", qs.len() - kstar)));
            }
            cert_clean(&qs, c)?
        }
        BatteryRegime::SmallC => cert_outliers_small_c(&qs, c, kstar)?,
        BatteryRegime::Noisy | BatteryRegime::NoisyOutliers => cert_noisy(&qs, c, kstar)?,
        BatteryRegime::LargeC | BatteryRegime::Clustered | BatteryRegime::Gap => noiseless_family(&qs, c, &inliers)?,
    };
    let w_hat = certificate.w_hat.unwrap_or(candidate.w_hat);
    let mut report = verify_kkt(&certificate, &w_hat, &qs, c, &inliers)?;
    let mut cluster = None;
    let witness = match regime {
        BatteryRegime::LargeC => {
            if kstar == qs.len() {
                return Err(Error::RegimeMismatch("large-c regime needs an outlier".into()));
            }
            refute_large_c(&qs, c, &w_star, kstar)?
        }
        BatteryRegime::Clustered => {
            let w_cl = inst
                .w_cl()
                .ok_or_else(|| Error::RegimeMismatch("instance has no clustered rotation".into()))?;
            let dot = w_cl.dot(&w_star).abs();
            cluster = Some((dot, 2.0 * c.sum_over(0..kstar) * (1.0 - dot) - c.sum_over(kstar..qs.len())));
            refute_clustered(&qs, c, &w_star, &w_cl, kstar)?
        }
        _ => None,
    };
    if let Some(w) = witness {
        report = report.refuted(w);
    }
    Ok(Assessment { report, certificate, candidate, cluster })
}

fn run_one(config: &BatteryConfig, index: usize, trial: usize, point: GridPoint) -> Result<BatteryRow> {
    let seed = derive_seed(config.seed, index as u64);
    let (inst, c) = battery_instance(config, point, seed)?;
    let qs = inst.data_matrices();
    let kstar = point.kstar;
    let inliers: Vec<usize> = (0..kstar).collect();
    let w_star = inst.w_star();
    let cand = tls_by_classification(&qs, &c, &inliers)?;
    let mut row = BatteryRow {
        index,
        trial,
        seed,
        ell: point.ell,
        kstar,
        sigma: point.sigma,
        c_avoids_extremes: avoids_extremes(&qs, &c, 1e-6),
        tls_value: cand.value,
        tie_flag: cand.tie_flag,
        ..Default::default()
    };
    if config.noisy() {
        let cond = check_noisy_condition(&qs, &c, kstar)?;
        row.zeta = Some(cond.gap.zeta);
        row.noisy_condition = Some(cond.holds());
        row.conjecture = Some(cond.conjecture_ok());
    }
    let mut w_hat = cand.w_hat;
    match assess(config.regime, &inst, &c) {
        Ok(a) => {
            let rep = &a.report;
            row.verdict = Some(rep.verdict);
            row.o1 = Some(rep.o1_residual);
            row.o2 = Some(rep.o2_lambda_min);
            row.o3 = Some(rep.o3_gap);
            row.min_block_eig = Some(a.certificate.min_block_eig());
            row.witness_violation = rep.witness.as_ref().map(|w| w.violation);
            if let Some((dot, cf)) = a.cluster {
                row.cluster_dot = Some(dot);
                row.closed_form = Some(cf);
            }
            w_hat = a.certificate.w_hat.unwrap_or(w_hat);
        }
        Err(Error::RegimeMismatch(m)) => row.mismatch = Some(m),
        Err(e) => return Err(e),
    }

    if let Ok(rep) = error_bound(&inst, &w_hat, &inliers) {
        row.sin_sq_tau = Some(rep.sin_sq_tau);
        row.error_rhs = Some(rep.rhs);
        row.error_holds = Some(rep.holds);
    }

    if config.solve {
        let sol = solve_sdr(&assemble_big_q(&qs, &c)?, &c, &config.solver)?;
        row.solver_objective = Some(sol.objective);
        row.solver_converged = Some(sol.converged);
        row.rank1_ratio = Some(sol.rank1_ratio);
        row.solver_tight = Some(sol.is_tight(cand.value));
        row.solver_gap = Some(cand.value - sol.objective);
        row.extraction_error = extract_quaternion(&sol.w).ok().map(|(q, _)| quat_angle(&q, &w_star));
        if config.compare_yc {
            let (qp, q) = assemble_big_q_yc(&qs, &c)?;
            let yc = solve_sdr_yc(&qp, &q, &c, &config.solver)?;
            row.yc_objective = Some(yc.objective);
            row.yc_converged = Some(yc.converged);
            row.yc_tight = Some(solver_tight(yc.objective, yc.rank1_ratio, cand.value));
        }
    }
    Ok(row)
}

fn summarize(regime: BatteryRegime, rows: &[BatteryRow]) -> BatterySummary {
    let count = |f: &dyn Fn(&BatteryRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let solver_runs = count(&|r| r.solver_tight.is_some());
    let solver_tight = count(&|r| r.solver_tight == Some(true));
    BatterySummary {
        regime: Some(regime),
        rows: rows.len(),
        mismatches: count(&|r| r.mismatch.is_some()),
        certified_tight: count(&|r| r.verdict == Some(Verdict::CertifiedTight)),
        refuted: count(&|r| r.verdict == Some(Verdict::Refuted)),
        inconclusive: count(&|r| r.verdict == Some(Verdict::Inconclusive)),
        error_bound_holds: count(&|r| r.error_holds == Some(true)),
        error_bound_checked: count(&|r| r.error_holds.is_some()),
        conjecture_holds: count(&|r| r.conjecture == Some(true)),
        solver_runs,
        solver_non_converged: count(&|r| r.solver_converged == Some(false)),
        solver_tight,
        non_tight_rate: (solver_runs > 0).then(|| (solver_runs - solver_tight) as f64 / solver_runs as f64),
        relaxations_agree: count(&|r| r.yc_tight.is_some() && r.yc_tight == r.solver_tight),
        relaxations_compared: count(&|r| r.yc_tight.is_some()),
    }
}

/// Generates every `(grid point, trial)` instance, builds and verifies the regime's
/// certificate or witness, optionally corroborates with the solver, and writes the
/// CSV and JSON outputs named in the config.
pub fn run_tightness_battery(config: &BatteryConfig) -> Result<BatteryResult> {
    config.validate()?;
    let grid = config.grid()?;
    let jobs: Vec<(usize, usize, GridPoint)> = grid
        .iter()
        .flat_map(|&p| (0..config.trials).map(move |t| (t, p)))
        .enumerate()
        .map(|(i, (t, p))| (i, t, p))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(i, t, p)| run_one(config, i, t, p))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(config.regime, &rows);
    let result = BatteryResult { config: config.clone(), rows, summary };
    if let Some(p) = &config.csv {
        write_csv(p, &result.rows)?;
    }
    if let Some(p) = &config.summary {
        write_json(p, &result.summary)?;
    }
    Ok(result)
}

fn create(path: impl AsRef<Path>) -> Result<std::io::BufWriter<std::fs::File>> {
    let p = path.as_ref();
    std::fs::File::create(p)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
}

pub fn write_csv<S: Serialize>(path: impl AsRef<Path>, rows: &[S]) -> Result<()> {
    write_csv_to(create(path)?, rows)
}

pub fn write_csv_to<W: Write, S: Serialize>(w: W, rows: &[S]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn check_sigmas(sigmas: &[f64], ell: usize, trials: usize) -> Result<()> {
    if sigmas.is_empty() || ell < 2 || trials == 0 {
        return invalid("need sigmas, ell >= 2 and trials >= 1");
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && **s <= 0.2)) {
        return invalid(format!("sigma {s} outside (0, 0.2]"));
    }
    Ok(())
}

fn noisy_instance(ell: usize, sigma: f64, seed: u64, si: usize, trial: usize) -> Result<Instance<f64>> {
    let s = derive_seed(seed, ((si as u64) << 32) | trial as u64);
    gen_instance(&GenConfig::gaussian(ell, ell, sigma, s))
}

fn sweep<R: Send>(
    sigmas: &[f64],
    trials: usize,
    f: impl Fn(usize, f64, usize) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let jobs: Vec<(usize, usize)> = (0..sigmas.len()).flat_map(|s| (0..trials).map(move |t| (s, t))).collect();
    jobs.into_par_iter().map(|(s, t)| f(s, sigmas[s], t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigengapRow {
    pub sigma: f64,
    pub trial: usize,
    pub lambda_min: f64,
    pub lambda_min2: f64,
    #[serde(with = "crate::jsonf")]
    pub zeta: f64,
}

/// `λ_min`, `λ_min2` and `ζ` of the summed data matrices of outlier-free noisy
/// instances, `trials` per noise level.
pub fn run_fig_eigengap(sigmas: &[f64], ell: usize, trials: usize, seed: u64) -> Result<Vec<EigengapRow>> {
    check_sigmas(sigmas, ell, trials)?;
    sweep(sigmas, trials, |si, sigma, trial| {
        let inst = noisy_instance(ell, sigma, seed, si, trial)?;
        let all: Vec<usize> = (0..ell).collect();
        let g = eigengap(&inst.data_matrices(), &all)?;
        Ok(EigengapRow { sigma, trial, lambda_min: g.lambda_min, lambda_min2: g.lambda_min2, zeta: g.zeta })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiRow {
    pub sigma: f64,
    pub trial: usize,
    pub d1_abs: f64,
    /// `ŵᵀQ₁ŵ + ‖Q₁ŵ‖`.
    pub comparison: f64,
}

/// `|d₁|` against `ŵᵀQ₁ŵ + ‖Q₁ŵ‖` for outlier-free noisy instances.
pub fn run_fig_di(sigmas: &[f64], ell: usize, trials: usize, seed: u64) -> Result<Vec<DiRow>> {
    check_sigmas(sigmas, ell, trials)?;
    sweep(sigmas, trials, |si, sigma, trial| {
        let inst = noisy_instance(ell, sigma, seed, si, trial)?;
        let qs = inst.data_matrices();
        let (w, d) = noisy_d(&qs, ell)?;
        let comparison = qs[0].residual(w.as_vec()) + qs[0].matrix().mul_vec(w.as_vec()).norm();
        Ok(DiRow { sigma, trial, d1_abs: d[0].abs(), comparison })
    })
}

pub fn run_fig_ratio(ells: &[usize], trials: usize, seed: u64) -> Result<Vec<RatioStats>> {
    if ells.is_empty() {
        return invalid("need at least one ell");
    }
    ells.iter()
        .enumerate()
        .map(|(k, &ell)| ratio_experiment(ell, trials, derive_seed(seed, k as u64)))
        .collect()
}

pub fn write_ratio_rows(path: impl AsRef<Path>, stats: &[RatioStats]) -> Result<()> {
    write_ratio_csv(create(path)?, stats)
}

/// Per-noise-level medians of a figure run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub trials: usize,
    pub median: Option<f64>,
}

pub fn eigengap_summary(rows: &[EigengapRow]) -> Vec<SigmaSummary> {
    by_sigma(rows, |r| r.sigma, |r| r.zeta)
}

/// Medians of `|d₁| / comparison`.
pub fn di_summary(rows: &[DiRow]) -> Vec<SigmaSummary> {
    by_sigma(rows, |r| r.sigma, |r| r.d1_abs / r.comparison)
}

fn by_sigma<R>(rows: &[R], sigma: impl Fn(&R) -> f64, value: impl Fn(&R) -> f64) -> Vec<SigmaSummary> {
    let mut sigmas: Vec<f64> = Vec::new();
    for r in rows {
        let s = sigma(r);
        if !sigmas.contains(&s) {
            sigmas.push(s);
        }
    }
    sigmas
        .into_iter()
        .map(|s| {
            let vals: Vec<f64> = rows.iter().filter(|r| sigma(r) == s).map(&value).collect();
            SigmaSummary { sigma: s, trials: vals.len(), median: median(vals) }
        })
        .collect()
}

/// Extraction error against the ground truth, for callers holding a solution.
pub fn rotation_error(w: &UnitQuaternion<f64>, inst: &Instance<f64>) -> f64 {
    quat_angle(w, &inst.w_star())
}
