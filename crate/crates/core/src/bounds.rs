//! Estimation-error bound for the TLS estimate and the spectral ratio of the
//! noiseless data sum under Gaussian points.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{eigh_small, eigvals_sym3, Mat3, Mat4, Vec3};
use crate::rotmath::{decompose_inlier, UnitQuaternion};
use crate::scalar::Real;
use crate::synth::{pair_rng, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ErrorBoundReport<T: Real> {
    /// `1 - (ŵᵀw*)²`.
    pub sin_sq_tau: T,
    /// `4Σ‖εᵢ‖‖xᵢ‖ / λ_min2(ΣPᵢ)` over the inlier set.
    #[serde(with = "crate::jsonf::generic")]
    pub rhs: T,
    pub lambda_min2: T,
    pub holds: bool,
}

/// Compares the angular error of `w_hat` against the noise-driven bound, with every
/// sum restricted to `inlier_set`. Needs the recorded noise of each inlier.
pub fn error_bound<T: Real>(
    instance: &Instance<T>,
    w_hat: &UnitQuaternion<T>,
    inlier_set: &[usize],
) -> Result<ErrorBoundReport<T>> {
    if inlier_set.is_empty() {
        return invalid("inlier set must be nonempty");
    }
    let mut p_sum = Mat4::zeros();
    let mut num = T::zero();
    for &i in inlier_set {
        let Some(pair) = instance.pairs.get(i) else {
            return invalid(format!("inlier index {i} out of range"));
        };
        let Some(eps) = pair.eps else {
            return invalid(format!("pair {i} has no recorded noise"));
        };
        p_sum += decompose_inlier(&pair.x, &instance.r_star, &eps).p;
        num += eps.norm() * pair.x.norm();
    }
    let lambda_min2 = eigh_small(&p_sum).values[1];
    let num = num * T::c(4.0);
    let rhs = if num == T::zero() {
        T::zero()
    } else if lambda_min2 > T::zero() {
        num / lambda_min2
    } else {
        T::infinity()
    };
    let d = w_hat.dot(&instance.w_star());
    let sin_sq_tau = (T::one() - d * d).max(T::zero()).min(T::one());
    Ok(ErrorBoundReport { sin_sq_tau, rhs, lambda_min2, holds: sin_sq_tau <= rhs + T::c(1e-10) })
}

/// `Σ‖xᵢ‖²` and `λ_max(Σxᵢxᵢᵀ)`.
fn scatter<T: Real>(xs: &[Vec3<T>]) -> (T, T) {
    let mut s = Mat3::zeros();
    let mut n2 = T::zero();
    for x in xs {
        s += x.outer(x);
        n2 += x.norm_sq();
    }
    (n2, eigvals_sym3(&s)[2])
}

/// `λ_min2(ΣPᵢ) = 4Σ‖xᵢ‖² - 4λ_max(Σxᵢxᵢᵀ)`, independent of the rotation.
pub fn lambda_min2_closed_form<T: Real>(xs: &[Vec3<T>]) -> Result<T> {
    if xs.is_empty() {
        return invalid("need at least one point");
    }
    let (n2, lmax) = scatter(xs);
    Ok(T::c(4.0) * (n2 - lmax))
}

/// Whether `ℓ ≥ (4 + 2√3 + 2t)√ℓ + (√3 + t)²`.
pub fn ratio_band_condition(ell: usize, t: f64) -> bool {
    let l = ell as f64;
    let s3 = 3f64.sqrt();
    l >= (4.0 + 2.0 * s3 + 2.0 * t) * l.sqrt() + (s3 + t).powi(2)
}

/// Lower bound `1 - exp(-t²/2) - 2exp(-3t²/8)` on the probability of the band.
pub fn ratio_band_probability(t: f64) -> f64 {
    1.0 - (-t * t / 2.0).exp() - 2.0 * (-3.0 * t * t / 8.0).exp()
}

/// One Monte Carlo draw; the CSV row omits `lambda_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTrial {
    pub trial: usize,
    pub ell: usize,
    pub sum_norm_sq: f64,
    pub lambda_min2: f64,
    pub ratio: f64,
    #[serde(skip)]
    pub lambda_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub ell: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub rows: Vec<RatioTrial>,
    /// Fraction of ratios in `[1/4, 3/4]`.
    pub fraction_in_band: f64,
    pub mean: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl RatioStats {
    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.ratio)
    }
}

fn ratio_trial(ell: usize, seed: u64, trial: usize) -> RatioTrial {
    let mut rng = pair_rng(seed, trial);
    let xs: Vec<Vec3<f64>> = (0..ell)
        .map(|_| Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let (n2, lmax) = scatter(&xs);
    let lambda_min2 = 4.0 * (n2 - lmax);
    let ratio = if lambda_min2 > 0.0 { n2 / lambda_min2 } else { f64::INFINITY };
    RatioTrial { trial, ell, sum_norm_sq: n2, lambda_min2, ratio, lambda_max: lmax }
}

/// `trials` independent draws of `ℓ` standard Gaussian points; trial `k` uses its
/// own stream of `seed`, so results do not depend on scheduling.
pub fn ratio_experiment(ell: usize, trials: usize, seed: u64) -> Result<RatioStats> {
    if ell == 0 || trials == 0 {
        return invalid("ell and trials must be positive");
    }
    let rows: Vec<RatioTrial> = (0..trials).into_par_iter().map(|k| ratio_trial(ell, seed, k)).collect();
    let n = trials as f64;
    let in_band = rows.iter().filter(|r| (0.25..=0.75).contains(&r.ratio)).count();
    let mean = rows.iter().map(|r| r.ratio).sum::<f64>() / n;
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(RatioStats { ell, trials, seed, rows, fraction_in_band: in_band as f64 / n, mean, min_ratio, max_ratio })
}

/// Writes `trial,ell,sum_norm_sq,lambda_min2,ratio` rows.
pub fn write_ratio_csv<'a, W: Write>(w: W, stats: impl IntoIterator<Item = &'a RatioStats>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in stats {
        for r in &s.rows {
            wr.serialize(r)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Empirical frequencies of the two concentration events behind the ratio band,
/// next to their stated probability lower bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub ell: usize,
    pub trials: usize,
    pub t: f64,
    /// Fraction with `Σ‖xᵢ‖² ∈ [3ℓ - 3t√ℓ, 3ℓ + 3t√ℓ]`.
    pub norm_band_freq: f64,
    pub norm_band_bound: f64,
    /// Fraction with `λ_max(Σxᵢxᵢᵀ) ≤ ℓ + 2(√3 + t)√ℓ + (√3 + t)²`.
    pub lambda_max_freq: f64,
    pub lambda_max_bound: f64,
    /// Both frequencies sit no more than five standard errors below their bounds.
    pub consistent: bool,
}

pub fn concentration_report(stats: &RatioStats, t: f64) -> ConcentrationReport {
    let l = stats.ell as f64;
    let n = stats.rows.len() as f64;
    let (lo, hi) = (3.0 * l - 3.0 * t * l.sqrt(), 3.0 * l + 3.0 * t * l.sqrt());
    let s3t = 3f64.sqrt() + t;
    let cap = l + 2.0 * s3t * l.sqrt() + s3t * s3t;
    let norm_band_freq = stats.rows.iter().filter(|r| (lo..=hi).contains(&r.sum_norm_sq)).count() as f64 / n;
    let lambda_max_freq = stats.rows.iter().filter(|r| r.lambda_max <= cap).count() as f64 / n;
    let norm_band_bound = (1.0 - 2.0 * (-3.0 * t * t / 8.0).exp()).max(0.0);
    let lambda_max_bound = (1.0 - (-t * t / 2.0).exp()).max(0.0);
    let ok = |f: f64, b: f64| f >= b - 5.0 * (b * (1.0 - b) / n).sqrt();
    ConcentrationReport {
        ell: stats.ell,
        trials: stats.rows.len(),
        t,
        norm_band_freq,
        norm_band_bound,
        lambda_max_freq,
        lambda_max_bound,
        consistent: ok(norm_band_freq, norm_band_bound) && ok(lambda_max_freq, lambda_max_bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh_small, Mat4};
    use crate::rotmath::{build_q, Rotation};
    use crate::synth::{gen_instance, GenConfig};
    use crate::tls::{sum_q, tls_by_classification};

    #[test]
    fn closed_form_small_cases() {
        let x = Vec3::new(1.0, 2.0, -0.5);
        assert!(lambda_min2_closed_form::<f64>(&[x]).unwrap().abs() < 1e-12);
        let e = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        assert!((lambda_min2_closed_form::<f64>(&e).unwrap() - 8.0).abs() < 1e-12);
        let r = Rotation::from_axis_angle(&Vec3::new(0.0, 0.6, 0.8), 1.1).unwrap();
        let mut p = Mat4::<f64>::zeros();
        for x in &e {
            p += *build_q(&r.apply(x), x).matrix();
        }
        assert!((eigh_small(&p).values[1] - 8.0).abs() < 1e-10);
        assert!(lambda_min2_closed_form::<f64>(&[]).is_err());
    }

    #[test]
    fn noiseless_bound_is_zero() {
        let inst = gen_instance::<f64>(&GenConfig::clean(10, 3)).unwrap();
        let rep = error_bound(&inst, &inst.w_star(), &inst.inlier_set()).unwrap();
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.sin_sq_tau < 1e-15 && rep.holds);
    }

    #[test]
    fn noisy_bound_holds() {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(30, 30, 0.05, 8)).unwrap();
        let qs = inst.data_matrices();
        let all = inst.inlier_set();
        let c = crate::tls::TruncationParams::uniform(10.0, 30).unwrap();
        let w = tls_by_classification(&qs, &c, &all).unwrap().w_hat;
        let rep = error_bound(&inst, &w, &all).unwrap();
        assert!(rep.holds && rep.sin_sq_tau > 0.0, "{rep:?}");
        let direct = eigh_small(&sum_q(&qs, 0..0)).values[0];
        assert_eq!(direct, 0.0);
    }

    #[test]
    fn missing_noise_is_rejected() {
        let mut inst = gen_instance::<f64>(&GenConfig::clean(4, 3)).unwrap();
        inst.pairs[2].eps = None;
        assert!(error_bound(&inst, &inst.w_star(), &[0, 1, 2]).is_err());
    }

    #[test]
    fn band_condition() {
        assert!(ratio_band_condition(400, 4.0));
        assert!(!ratio_band_condition(100, 4.0));
        assert!(ratio_band_probability(4.0) > 0.99);
    }

    #[test]
    fn ratio_experiment_deterministic() {
        let a = ratio_experiment(50, 16, 9).unwrap();
        let b = ratio_experiment(50, 16, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.min_ratio >= 0.25);
        let mut buf = Vec::new();
        write_ratio_csv(&mut buf, [&a]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,ell,sum_norm_sq,lambda_min2,ratio\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
