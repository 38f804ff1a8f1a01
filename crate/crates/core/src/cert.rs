//! Closed-form dual certificates, verification of the three optimality conditions
//! (stationarity, dual feasibility, objective exactness) and refutation witnesses.
//!
//! A certificate stores the multiplier `μ̂` and the blocks `[D̂]₀ᵢ`; the full dual
//! matrix has `[D̂]ᵢᵢ = -2[D̂]₀ᵢ` and zeros elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh_small, Mat, Mat3, Mat4, Vec4};
use crate::rotmath::{DataMatrix, UnitQuaternion};
use crate::scalar::Real;
use crate::sdr::{assemble_big_q, half_shifted, BigMatrix};
use crate::tls::{sum_q, TruncationParams};

/// Which closed-form construction produced a certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Clean,
    OutliersSmallC,
    Noisy,
    NoisyOutliers,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Clean => "clean",
            Regime::OutliersSmallC => "outliers_small_c",
            Regime::Noisy => "noisy",
            Regime::NoisyOutliers => "noisy_outliers",
        })
    }
}

/// Dual multipliers `(μ̂, [D̂]₀₁..[D̂]₀ℓ)` plus the auxiliary matrices of the noisy
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<T: Real> {
    pub regime: Regime,
    pub mu_hat: T,
    pub d_blocks: Vec<Mat4<T>>,
    /// Indices treated as kept pairs.
    pub inlier_set: Vec<usize>,
    pub w_hat: Option<UnitQuaternion<T>>,
    /// `[V̂₀, ŵ]`, noisy regimes only.
    pub v_hat: Option<Mat4<T>>,
    /// `Ŝᵢ` for the inliers, in `inlier_set` order.
    pub s_blocks: Option<Vec<Mat4<T>>>,
    pub t_blocks: Option<Vec<Mat3<T>>>,
}

impl<T: Real> Certificate<T> {
    pub fn ell(&self) -> usize {
        self.d_blocks.len()
    }

    /// The full block matrix `D̂`.
    pub fn full_d(&self) -> BigMatrix<T> {
        let mut d = BigMatrix::zeros(self.ell());
        for (i, b) in self.d_blocks.iter().enumerate() {
            d.set_block(0, i + 1, b);
            d.set_block(i + 1, i + 1, &b.scale(-T::c(2.0)));
        }
        d
    }

    /// `𝒬 - μ̂B - D̂`.
    pub fn dual_slack(&self, big_q: &BigMatrix<T>) -> BigMatrix<T> {
        let mut m = big_q.clone();
        let d = self.full_d();
        m.axpy(-T::one(), &d);
        for k in 0..4 {
            let v = m.get(k, k) - self.mu_hat;
            m.set_sym(k, k, v);
        }
        m
    }

    /// Deviation of `D̂` from the required block pattern: blocks `(0,0)`, `(i,j)` for
    /// distinct nonzero `i, j` must vanish, `[D̂]ᵢᵢ + 2[D̂]₀ᵢ = 0`, everything symmetric.
    pub fn structure_residual(&self) -> T {
        let d = self.full_d();
        let ell = self.ell();
        let mut r = d.asymmetry().max(d.block(0, 0).max_abs());
        for i in 1..=ell {
            r = r.max((d.block(i, i) + d.block(0, i).scale(T::c(2.0))).max_abs());
            r = r.max(d.block(0, i).asymmetry());
            for j in 1..i {
                r = r.max(d.block(i, j).max_abs());
            }
        }
        r
    }

    /// Smallest eigenvalue over all `[D̂]₀ᵢ`.
    pub fn min_block_eig(&self) -> T {
        self.d_blocks.iter().map(|b| eigh_small(b).min()).fold(T::infinity(), T::min)
    }

    pub fn record(&self) -> CertificateRecord {
        let f = |m: &Mat4<T>| m.cast::<f64>().row_major();
        CertificateRecord {
            regime: self.regime,
            mu_hat: self.mu_hat.to_f64_lossy(),
            d_blocks: self.d_blocks.iter().map(f).collect(),
            inlier_set: self.inlier_set.clone(),
            w_hat: self.w_hat.map(|w| w.as_vec().cast::<f64>().0),
            v_hat: self.v_hat.as_ref().map(f),
        }
    }
}

/// JSON form of a certificate; blocks are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub regime: Regime,
    pub mu_hat: f64,
    pub d_blocks: Vec<Vec<f64>>,
    pub inlier_set: Vec<usize>,
    pub w_hat: Option<[f64; 4]>,
    pub v_hat: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedTight,
    Refuted,
    Inconclusive,
}

/// Stacked vector `z = [z₀; …; z_ℓ]` with `zᵀ(𝒬 - μ̂B - D̂)z < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RefutationWitness<T: Real> {
    pub z_blocks: Vec<Vec4<T>>,
    pub violation: T,
}

impl<T: Real> RefutationWitness<T> {
    /// Re-evaluates the quadratic form against a given slack matrix.
    pub fn evaluate(&self, slack: &BigMatrix<T>) -> T {
        slack.quad_blocks(&self.z_blocks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TightnessReport<T: Real> {
    /// Largest stationarity residual over all pairs.
    pub o1_residual: T,
    /// Smallest eigenvalue of `𝒬 - μ̂B - D̂`.
    pub o2_lambda_min: T,
    /// `μ̂ - Σ_inliers(ŵᵀQᵢŵ - cᵢ²)`.
    pub o3_gap: T,
    pub tol: T,
    pub tol_psd: T,
    pub verdict: Verdict,
    pub witness: Option<RefutationWitness<T>>,
}

impl<T: Real> TightnessReport<T> {
    /// Marks the report refuted by an explicit witness.
    pub fn refuted(mut self, witness: RefutationWitness<T>) -> Self {
        self.verdict = Verdict::Refuted;
        self.witness = Some(witness);
        self
    }
}

fn check_len<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<()> {
    if qs.is_empty() {
        return invalid("need at least one pair");
    }
    if qs.len() != c.len() {
        return invalid(format!("{} data matrices but {} thresholds", qs.len(), c.len()));
    }
    Ok(())
}

fn check_kstar<T: Real>(qs: &[DataMatrix<T>], kstar: usize) -> Result<()> {
    if kstar == 0 || kstar > qs.len() {
        return invalid(format!("kstar must lie in 1..={}, got {kstar}", qs.len()));
    }
    Ok(())
}

/// The noiseless family: inlier blocks `(Qᵢ + cᵢ²I)/2`, others `(Q_j - c_j²I)/2`,
/// `μ̂ = -Σ_inliers cᵢ²`. No precondition checks.
pub fn noiseless_family<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    inliers: &[usize],
) -> Result<Certificate<T>> {
    check_len(qs, c)?;
    let mut keep = vec![false; qs.len()];
    for &i in inliers {
        if i >= qs.len() {
            return invalid(format!("inlier index {i} out of range"));
        }
        keep[i] = true;
    }
    let d_blocks = qs
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let c2 = c.get(i);
            if keep[i] {
                (*q.matrix() + Mat4::scalar(c2)).scale(T::c(0.5))
            } else {
                half_shifted(q, c2)
            }
        })
        .collect();
    Ok(Certificate {
        regime: if inliers.len() == qs.len() { Regime::Clean } else { Regime::OutliersSmallC },
        mu_hat: -c.sum_over(inliers.iter().copied()),
        d_blocks,
        inlier_set: inliers.to_vec(),
        w_hat: None,
        v_hat: None,
        s_blocks: None,
        t_blocks: None,
    })
}

/// Certificate for noiseless data without outliers.
pub fn cert_clean<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<Certificate<T>> {
    let all: Vec<usize> = (0..qs.len()).collect();
    let mut cert = noiseless_family(qs, c, &all)?;
    cert.regime = Regime::Clean;
    Ok(cert)
}

/// Certificate for noiseless inliers `0..kstar` and outliers with `c_j² < λ_min(Q_j)`.
pub fn cert_outliers_small_c<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    kstar: usize,
) -> Result<Certificate<T>> {
    check_len(qs, c)?;
    check_kstar(qs, kstar)?;
    for (j, q) in qs.iter().enumerate().skip(kstar) {
        let lmin = q.lambda_min();
        if !(c.get(j) < lmin) {
            return Err(Error::RegimeMismatch(format!(
                "outlier {j}: c_j^2 = {} is not below lambda_min(Q_j) = {lmin}",
                c.get(j)
            )));
        }
    }
    let inliers: Vec<usize> = (0..kstar).collect();
    let mut cert = noiseless_family(qs, c, &inliers)?;
    cert.regime = if kstar == qs.len() { Regime::Clean } else { Regime::OutliersSmallC };
    Ok(cert)
}

/// Witness against tightness at the ground truth when outlier `j` has
/// `c_j² > w*ᵀQ_jw*`. Stationarity forces `2w*ᵀ[D̂]₀ⱼw* = w*ᵀQ_jw* - c_j² < 0` for
/// every admissible `D̂`; the witness uses the most negative direction of the
/// canonical block `(Q_j - c_j²I)/2` and is zero elsewhere.
pub fn refute_large_c<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    w_star: &UnitQuaternion<T>,
    j: usize,
) -> Result<Option<RefutationWitness<T>>> {
    check_len(qs, c)?;
    if j >= qs.len() {
        return invalid(format!("index {j} out of range"));
    }
    let r = qs[j].residual(w_star.as_vec());
    if !(c.get(j) > r) {
        return Ok(None);
    }
    let block = half_shifted(&qs[j], c.get(j));
    let e = eigh_small(&block);
    let mut z = vec![Vec4::zeros(); qs.len() + 1];
    z[j + 1] = e.vector(0);
    // Only block (j, j) of the slack is touched: it equals 2[D̂]₀ⱼ.
    let violation = block.quad(&z[j + 1]) * T::c(2.0);
    Ok(Some(RefutationWitness { z_blocks: z, violation }))
}

/// Witness for outliers `kstar..ℓ` clustered at `w_cl` (each `Q_j w_cl = 0`), built
/// from `z₀ = z_j = w_cl` and inlier blocks `w*` (signs aligned), evaluated against
/// the canonical noiseless family. `None` when the cluster condition fails.
pub fn refute_clustered<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    w_star: &UnitQuaternion<T>,
    w_cl: &UnitQuaternion<T>,
    kstar: usize,
) -> Result<Option<RefutationWitness<T>>> {
    check_len(qs, c)?;
    check_kstar(qs, kstar)?;
    let ell = qs.len();
    for (j, q) in qs.iter().enumerate().skip(kstar) {
        let res = q.matrix().mul_vec(w_cl.as_vec()).norm();
        if res > T::tol(1e-8) * (T::one() + q.matrix().frobenius()) {
            return Err(Error::RegimeMismatch(format!(
                "outlier {j} is not clustered at w_cl: |Q_j w_cl| = {res}"
            )));
        }
    }
    let dot = w_cl.dot(w_star);
    let c_in = c.sum_over(0..kstar);
    let c_out = c.sum_over(kstar..ell);
    if !(T::one() - c_out / (T::c(2.0) * c_in) < dot.abs()) {
        return Ok(None);
    }
    let zc = if dot < T::zero() { -*w_cl.as_vec() } else { *w_cl.as_vec() };
    let mut z = vec![zc; ell + 1];
    for zi in z.iter_mut().skip(1).take(kstar) {
        *zi = *w_star.as_vec();
    }
    let inliers: Vec<usize> = (0..kstar).collect();
    let family = noiseless_family(qs, c, &inliers)?;
    let slack = family.dual_slack(&assemble_big_q(qs, c)?);
    let violation = slack.quad_blocks(&z);
    Ok(Some(RefutationWitness { z_blocks: z, violation }))
}

/// Spectrum summary of `Σ_{i∈subset} Qᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Eigengap<T: Real> {
    pub lambda_min: T,
    pub lambda_min2: T,
    /// `λ_min2/λ_min`; infinite when `λ_min` is numerically zero.
    #[serde(with = "crate::jsonf::generic")]
    pub zeta: T,
    /// `λ_min/λ_min2`, always finite.
    pub eta: T,
}

pub fn eigengap<T: Real>(qs: &[DataMatrix<T>], subset: &[usize]) -> Result<Eigengap<T>> {
    if subset.is_empty() {
        return invalid("subset must be nonempty");
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= qs.len()) {
        return invalid(format!("index {i} out of range"));
    }
    let e = eigh_small(&sum_q(qs, subset.iter().copied()));
    Ok(gap_from(e.values[0], e.values[1], e.values[3]))
}

fn gap_from<T: Real>(l1: T, l2: T, lmax: T) -> Eigengap<T> {
    let floor = T::tol(1e-14) * lmax.abs().max(T::one());
    let l1c = if l1 <= floor { T::zero() } else { l1 };
    let (zeta, eta) = if l1c == T::zero() {
        (T::infinity(), T::zero())
    } else if l2 > T::zero() {
        (l2 / l1c, l1c / l2)
    } else {
        (T::one(), T::one())
    };
    Eigengap { lambda_min: l1, lambda_min2: l2, zeta, eta }
}

/// Per-inlier view of the noisy sufficient condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NoisyMargin<T: Real> {
    pub index: usize,
    pub c_sq: T,
    /// `ŵᵀQᵢŵ`.
    pub residual: T,
    /// `‖Qᵢŵ‖`.
    pub qw_norm: T,
    pub d: T,
    /// `ŵᵀQᵢŵ + ‖Qᵢŵ‖ + (|dᵢ| + dᵢ)/2`.
    pub rhs: T,
    pub margin: T,
    /// Margin under the conjectured weaker bound `ŵᵀQᵢŵ + ‖Qᵢŵ‖`.
    pub conjecture_margin: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NoisyCondition<T: Real> {
    pub w_hat: UnitQuaternion<T>,
    pub kstar: usize,
    pub gap: Eigengap<T>,
    /// `ζ ≥ k/(k-1)` (any `ζ` when `k = 1` and `λ_min = 0`).
    pub gap_ok: bool,
    pub margins: Vec<NoisyMargin<T>>,
    /// Outliers `j ≥ kstar` with `c_j² ≥ λ_min(Q_j)`.
    pub outlier_violations: Vec<usize>,
}

impl<T: Real> NoisyCondition<T> {
    pub fn margins_ok(&self) -> bool {
        self.margins.iter().all(|m| m.margin > T::zero())
    }

    pub fn conjecture_ok(&self) -> bool {
        self.margins.iter().all(|m| m.conjecture_margin > T::zero())
    }

    pub fn holds(&self) -> bool {
        self.gap_ok && self.margins_ok() && self.outlier_violations.is_empty()
    }

    /// The first failing inequality, described.
    pub fn failure(&self) -> Option<String> {
        if !self.gap_ok {
            return Some(format!(
                "eigengap zeta = {} below k/(k-1) with k = {}",
                self.gap.zeta, self.kstar
            ));
        }
        if let Some(m) = self.margins.iter().find(|m| !(m.margin > T::zero())) {
            return Some(format!("inlier {}: c_i^2 = {} does not exceed {}", m.index, m.c_sq, m.rhs));
        }
        self.outlier_violations
            .first()
            .map(|j| format!("outlier {j}: c_j^2 is not below lambda_min(Q_j)"))
    }
}

/// Pieces of the noisy condition that do not depend on `c`.
struct NoisyParts<T: Real> {
    w: UnitQuaternion<T>,
    gap: Eigengap<T>,
    sum: Mat4<T>,
    residuals: Vec<T>,
    qw: Vec<T>,
    d: Vec<T>,
}

fn noisy_parts<T: Real>(qs: &[DataMatrix<T>], kstar: usize) -> Result<NoisyParts<T>> {
    check_kstar(qs, kstar)?;
    let sum = sum_q(qs, 0..kstar);
    let e = eigh_small(&sum);
    let w = UnitQuaternion::from_vector(e.vector(0))?;
    let gap = gap_from(e.values[0], e.values[1], e.values[3]);
    let residuals: Vec<T> = qs[..kstar].iter().map(|q| q.residual(w.as_vec())).collect();
    let qw = qs[..kstar].iter().map(|q| q.matrix().mul_vec(w.as_vec()).norm()).collect();
    let k = T::from_count(kstar);
    let mean = residuals.iter().copied().sum::<T>() / k;
    let d = (0..kstar)
        .map(|i| {
            let tail = if kstar > 1 {
                // Σ_{j≠i}(Qᵢ - Q_j) = kQᵢ - Σ_j Q_j.
                let m = qs[i].matrix().scale(k) - sum;
                gap.eta * eigh_small(&m).max() / T::from_count(kstar - 1)
            } else {
                T::zero()
            };
            mean - residuals[i] + tail
        })
        .collect();
    Ok(NoisyParts { w, gap, sum, residuals, qw, d })
}

/// Evaluates the noisy sufficient condition for inliers `0..kstar` (all pairs when
/// `kstar = ℓ`), with `ŵ` the bottom eigenvector of the inlier sum.
pub fn check_noisy_condition<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    kstar: usize,
) -> Result<NoisyCondition<T>> {
    check_len(qs, c)?;
    let p = noisy_parts(qs, kstar)?;
    let two = T::c(2.0);
    let margins = (0..kstar)
        .map(|i| {
            let base = p.residuals[i] + p.qw[i];
            let rhs = base + (p.d[i].abs() + p.d[i]) / two;
            NoisyMargin {
                index: i,
                c_sq: c.get(i),
                residual: p.residuals[i],
                qw_norm: p.qw[i],
                d: p.d[i],
                rhs,
                margin: c.get(i) - rhs,
                conjecture_margin: c.get(i) - base,
            }
        })
        .collect();
    let gap_ok = if kstar == 1 {
        p.gap.eta == T::zero()
    } else {
        p.gap.zeta >= T::from_count(kstar) / T::from_count(kstar - 1)
    };
    let outlier_violations = (kstar..qs.len()).filter(|&j| !(c.get(j) < qs[j].lambda_min())).collect();
    Ok(NoisyCondition { w_hat: p.w, kstar, gap: p.gap, gap_ok, margins, outlier_violations })
}

/// Inlier thresholds `headroom · rhsᵢ` for the noisy condition.
pub fn noisy_thresholds<T: Real>(qs: &[DataMatrix<T>], kstar: usize, headroom: T) -> Result<Vec<T>> {
    let p = noisy_parts(qs, kstar)?;
    Ok((0..kstar)
        .map(|i| headroom * (p.residuals[i] + p.qw[i] + (p.d[i].abs() + p.d[i]) / T::c(2.0)))
        .collect())
}

/// `ŵ` and the correction terms `dᵢ` of the first `kstar` pairs; they do not depend
/// on the thresholds.
pub fn noisy_d<T: Real>(qs: &[DataMatrix<T>], kstar: usize) -> Result<(UnitQuaternion<T>, Vec<T>)> {
    let p = noisy_parts(qs, kstar)?;
    Ok((p.w, p.d))
}

/// Householder reflection sending `e₄` to `±ŵ`, with the last column replaced by
/// `ŵ` itself. The sign is picked so the reflection vector has norm at least `√2`.
pub fn basis_completion<T: Real>(w: &UnitQuaternion<T>) -> Mat4<T> {
    let w = *w.as_vec();
    let e4 = Vec4::unit(3);
    // u = e₄ + sw with s = sign(w₄) gives ‖u‖² = 2 + 2|w₄|.
    let s = if w[3] >= T::zero() { T::one() } else { -T::one() };
    let u = e4 + w.scale(s);
    let h = Mat4::identity() - u.outer(&u).scale(T::c(2.0) / u.norm_sq());
    let mut v = h;
    for r in 0..4 {
        v[(r, 3)] = w[r];
    }
    v
}

/// Noisy certificate without checking its preconditions. Used directly by the
/// conjecture probe; [`cert_noisy`] is the checked entry point.
pub fn build_noisy_certificate<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    kstar: usize,
) -> Result<Certificate<T>> {
    check_len(qs, c)?;
    let p = noisy_parts(qs, kstar)?;
    let v = basis_completion(&p.w);
    let v0 = |m: &Mat4<T>| -> Mat3<T> {
        let full = v.transpose().mul_mat(m).mul_mat(&v);
        let mut out = Mat::zeros();
        for r in 0..3 {
            for s in 0..3 {
                out[(r, s)] = full[(r, s)];
            }
        }
        out.symmetrized()
    };
    let k = T::from_count(kstar);
    let eta = p.gap.eta;
    let (a, b) = if kstar > 1 {
        let km1 = T::from_count(kstar - 1);
        (T::one() - k * eta / km1, eta / km1)
    } else {
        (T::one(), T::zero())
    };
    let sum_v = v0(&p.sum);
    let shift = Mat3::scalar(p.residuals.iter().copied().sum::<T>() / k);
    let mut t_blocks = Vec::with_capacity(kstar);
    let mut s_blocks = Vec::with_capacity(kstar);
    let mut d_blocks = Vec::with_capacity(qs.len());
    for (i, q) in qs.iter().enumerate() {
        if i < kstar {
            let t = (v0(q.matrix()).scale(a) + sum_v.scale(b) - shift).symmetrized();
            let mut pad = Mat4::zeros();
            for r in 0..3 {
                for s in 0..3 {
                    pad[(r, s)] = t[(r, s)];
                }
            }
            let s_i = v.mul_mat(&pad).mul_mat(&v.transpose()).symmetrized();
            d_blocks.push(s_i - half_shifted(q, c.get(i)));
            t_blocks.push(t);
            s_blocks.push(s_i);
        } else {
            d_blocks.push(half_shifted(q, c.get(i)));
        }
    }
    let mu_hat = (0..kstar).map(|i| p.residuals[i] - c.get(i)).sum();
    Ok(Certificate {
        regime: if kstar == qs.len() { Regime::Noisy } else { Regime::NoisyOutliers },
        mu_hat,
        d_blocks,
        inlier_set: (0..kstar).collect(),
        w_hat: Some(p.w),
        v_hat: Some(v),
        s_blocks: Some(s_blocks),
        t_blocks: Some(t_blocks),
    })
}

/// Noisy certificate for inliers `0..kstar`; fails with the violated inequality
/// when the sufficient condition does not hold.
pub fn cert_noisy<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>, kstar: usize) -> Result<Certificate<T>> {
    let cond = check_noisy_condition(qs, c, kstar)?;
    if let Some(msg) = cond.failure() {
        return Err(Error::RegimeMismatch(msg));
    }
    build_noisy_certificate(qs, c, kstar)
}

/// Residuals of the three properties of the noisy auxiliary matrices:
/// `ΣŜᵢ = Σ(Qᵢ - ŵᵀQᵢŵ I)`, `Ŝᵢ ⪰ 0`, `Ŝᵢ + cᵢ²I - Qᵢ ≻ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AuxiliaryCheck<T: Real> {
    pub sum_residual: T,
    pub min_eig_s: T,
    pub min_eig_shifted: T,
}

pub fn check_auxiliary<T: Real>(
    cert: &Certificate<T>,
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
) -> Result<AuxiliaryCheck<T>> {
    let (Some(s_blocks), Some(w)) = (cert.s_blocks.as_ref(), cert.w_hat.as_ref()) else {
        return invalid("certificate carries no auxiliary matrices");
    };
    let mut lhs = Mat4::zeros();
    let mut rhs = Mat4::zeros();
    let mut min_s = T::infinity();
    let mut min_shift = T::infinity();
    for (&i, s) in cert.inlier_set.iter().zip(s_blocks) {
        let q = qs[i].matrix();
        lhs += *s;
        rhs += *q - Mat4::scalar(qs[i].residual(w.as_vec()));
        min_s = min_s.min(eigh_small(s).min());
        min_shift = min_shift.min(eigh_small(&(*s + Mat4::scalar(c.get(i)) - *q)).min());
    }
    Ok(AuxiliaryCheck { sum_residual: (lhs - rhs).frobenius(), min_eig_s: min_s, min_eig_shifted: min_shift })
}

/// Checks the three optimality conditions for `cert` at `ŵ` with kept set
/// `inlier_set`. The verdict is `certified_tight` or `inconclusive`; refutation comes
/// from the explicit witnesses.
pub fn verify_kkt<T: Real>(
    cert: &Certificate<T>,
    w_hat: &UnitQuaternion<T>,
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    inlier_set: &[usize],
) -> Result<TightnessReport<T>> {
    check_len(qs, c)?;
    if cert.ell() != qs.len() {
        return invalid("certificate and data disagree on ell");
    }
    let ell = qs.len();
    let mut keep = vec![false; ell];
    for &i in inlier_set {
        if i >= ell {
            return invalid(format!("inlier index {i} out of range"));
        }
        keep[i] = true;
    }
    let w = w_hat.as_vec();
    let two = T::c(2.0);
    let mut o1 = T::zero();
    let mut target = T::zero();
    for (i, q) in qs.iter().enumerate() {
        let c2 = Mat4::scalar(c.get(i));
        let d2 = cert.d_blocks[i].scale(two);
        let m = if keep[i] { d2 + *q.matrix() - c2 } else { d2 + c2 - *q.matrix() };
        o1 = o1.max(m.mul_vec(w).norm());
        if keep[i] {
            target += q.residual(w) - c.get(i);
        }
    }
    let big_q = assemble_big_q(qs, c)?;
    let slack = cert.dual_slack(&big_q);
    let o2 = slack.min_eig()?;
    let o3 = cert.mu_hat - target;
    let tol = T::c(1e-8) * (T::one() + big_q.frobenius());
    // ‖𝔀𝔀ᵀ‖_F = ‖𝔀‖² = k + 1 for the lift at ŵ.
    let tol_psd = T::c(1e-8) * (T::one() + T::from_count(inlier_set.len() + 1));
    let ok = o1 <= tol && o2 >= -tol_psd && o3.abs() <= tol;
    Ok(TightnessReport {
        o1_residual: o1,
        o2_lambda_min: o2,
        o3_gap: o3,
        tol,
        tol_psd,
        verdict: if ok { Verdict::CertifiedTight } else { Verdict::Inconclusive },
        witness: None,
    })
}

/// Whether every `cᵢ²` stays at least `rel·(1 + λ_max)` away from both extreme
/// eigenvalues of `Qᵢ`.
pub fn avoids_extremes<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>, rel: T) -> bool {
    qs.iter().enumerate().all(|(i, q)| {
        let e = eigh_small(q.matrix());
        let band = rel * (T::one() + e.max().abs());
        (c.get(i) - e.min()).abs() > band && (c.get(i) - e.max()).abs() > band
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::build_q;
    use crate::synth::{gen_instance, GenConfig, OutlierSpec};
    use crate::tls::tls_by_classification;

    fn clean(ell: usize, seed: u64) -> (Vec<DataMatrix<f64>>, TruncationParams<f64>, UnitQuaternion<f64>) {
        let inst = gen_instance::<f64>(&GenConfig::clean(ell, seed)).unwrap();
        (inst.data_matrices(), TruncationParams::uniform(1.0, ell).unwrap(), inst.w_star())
    }

    #[test]
    fn clean_certificate_verifies() {
        let (qs, c, w) = clean(10, 3);
        let cert = cert_clean(&qs, &c).unwrap();
        assert_eq!(cert.structure_residual(), 0.0);
        let all: Vec<usize> = (0..10).collect();
        let rep = verify_kkt(&cert, &w, &qs, &c, &all).unwrap();
        assert_eq!(rep.verdict, Verdict::CertifiedTight, "{rep:?}");
        assert!(rep.o1_residual < 1e-10);
        // The lift of w* is a null vector of the slack.
        let slack = cert.dual_slack(&assemble_big_q(&qs, &c).unwrap());
        let z = vec![*w.as_vec(); 11];
        assert!(slack.quad_blocks(&z).abs() < 1e-10);
    }

    #[test]
    fn single_pair() {
        let (qs, c, w) = clean(1, 9);
        let rep = verify_kkt(&cert_clean(&qs, &c).unwrap(), &w, &qs, &c, &[0]).unwrap();
        assert_eq!(rep.verdict, Verdict::CertifiedTight);
    }

    #[test]
    fn corrupted_mu_is_inconclusive() {
        let (qs, c, w) = clean(6, 1);
        let mut cert = cert_clean(&qs, &c).unwrap();
        cert.mu_hat += 1.0;
        let rep = verify_kkt(&cert, &w, &qs, &c, &(0..6).collect::<Vec<_>>()).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!((rep.o3_gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_c_mismatch_names_index() {
        let cfg = GenConfig { kstar: 4, ..GenConfig::clean(6, 2) }.with_outliers(OutlierSpec::RandomGaussian);
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let mut c2: Vec<f64> = qs.iter().map(|q| 0.5 * q.lambda_min().max(1e-3)).collect();
        c2[5] = qs[5].lambda_min() * 2.0;
        let c = TruncationParams::new(c2).unwrap();
        match cert_outliers_small_c(&qs, &c, 4) {
            Err(Error::RegimeMismatch(m)) => assert!(m.contains("outlier 5"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn householder_basis() {
        for w in [Vec4::new(0.0, 0.0, 0.0, 1.0), Vec4::new(0.5, -0.5, 0.5, -0.5), Vec4::new(1.0, 0.0, 0.0, 0.0)] {
            let w = UnitQuaternion::new(w).unwrap();
            let v = basis_completion(&w);
            assert!((v.transpose().mul_mat(&v) - Mat4::identity()).max_abs() < 1e-15);
            assert_eq!(v.col(3), *w.as_vec());
        }
    }

    #[test]
    fn noisy_certificate_verifies() {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(20, 20, 0.01, 11)).unwrap();
        let qs = inst.data_matrices();
        let c = TruncationParams::new(noisy_thresholds(&qs, 20, 1.1).unwrap()).unwrap();
        let cond = check_noisy_condition(&qs, &c, 20).unwrap();
        assert!(cond.holds(), "{:?}", cond.failure());
        let cert = cert_noisy(&qs, &c, 20).unwrap();
        assert!(cert.structure_residual() < 1e-15);
        let aux = check_auxiliary(&cert, &qs, &c).unwrap();
        assert!(aux.sum_residual < 1e-10 && aux.min_eig_s > -1e-10 && aux.min_eig_shifted > 0.0, "{aux:?}");
        let tls = tls_by_classification(&qs, &c, &(0..20).collect::<Vec<_>>()).unwrap();
        let rep = verify_kkt(&cert, &tls.w_hat, &qs, &c, &tls.kept()).unwrap();
        assert_eq!(rep.verdict, Verdict::CertifiedTight, "{rep:?}");
        assert!(cert.min_block_eig() > 0.0);
    }

    #[test]
    fn d_by_hand_for_two_pairs() {
        let e = |a: f64, b: f64, c: f64| crate::linalg::Vec3::new(a, b, c);
        let qs = vec![build_q(&e(1.0, 0.1, 0.0), &e(1.0, 0.0, 0.0)), build_q(&e(0.0, 1.0, 0.05), &e(0.0, 1.0, 0.0))];
        let c = TruncationParams::uniform(1.0, 2).unwrap();
        let cond = check_noisy_condition(&qs, &c, 2).unwrap();
        let w = cond.w_hat.as_vec();
        let r: Vec<f64> = qs.iter().map(|q| q.matrix().quad(w)).collect();
        let lmax = eigh_small(&(*qs[0].matrix() - *qs[1].matrix())).max();
        let d0 = (r[0] + r[1]) / 2.0 - r[0] + cond.gap.eta * lmax;
        assert!((cond.margins[0].d - d0).abs() < 1e-12);
    }

    #[test]
    fn large_c_witness() {
        let cfg = GenConfig { kstar: 5, ..GenConfig::clean(6, 8) }.with_outliers(OutlierSpec::RandomGaussian);
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let w = inst.w_star();
        let r = qs[5].residual(w.as_vec());
        let mut c2 = vec![1.0; 6];
        c2[5] = 2.0 * r;
        let c = TruncationParams::new(c2.clone()).unwrap();
        let wit = refute_large_c(&qs, &c, &w, 5).unwrap().unwrap();
        assert!(wit.violation <= r - 2.0 * r + 1e-9);
        let fam = noiseless_family(&qs, &c, &[0, 1, 2, 3, 4]).unwrap();
        let slack = fam.dual_slack(&assemble_big_q(&qs, &c).unwrap());
        assert!((wit.evaluate(&slack) - wit.violation).abs() < 1e-10);
        c2[5] = 0.5 * r;
        let c = TruncationParams::new(c2).unwrap();
        assert!(refute_large_c(&qs, &c, &w, 5).unwrap().is_none());
    }

    #[test]
    fn clustered_witness_closed_form() {
        let cfg = GenConfig { kstar: 8, ..GenConfig::clean(12, 4) }.with_outliers(OutlierSpec::ClusteredDot { dot: 0.9 });
        let inst = gen_instance::<f64>(&cfg).unwrap();
        let qs = inst.data_matrices();
        let c = TruncationParams::uniform(1.0, 12).unwrap();
        let (w, wcl) = (inst.w_star(), inst.w_cl().unwrap());
        let wit = refute_clustered(&qs, &c, &w, &wcl, 8).unwrap().unwrap();
        let closed = 2.0 * 8.0 * (1.0 - wcl.dot(&w).abs()) - 4.0;
        assert!((wit.violation - closed).abs() < 1e-9, "{} vs {closed}", wit.violation);
        assert!(wit.violation < 0.0);
        // Clustering broken: the outliers are no longer annihilated by w_cl.
        let other = UnitQuaternion::new(Vec4::new(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(refute_clustered(&qs, &c, &w, &other, 8), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn eigengap_clean_is_infinite() {
        let (qs, _, _) = clean(10, 2);
        let g = eigengap(&qs, &(0..10).collect::<Vec<_>>()).unwrap();
        assert!(g.zeta.is_infinite() && g.eta == 0.0);
    }

    #[test]
    fn certificate_json() {
        let (qs, c, _) = clean(2, 2);
        let rec = cert_clean(&qs, &c).unwrap().record();
        let s = serde_json::to_string(&rec).unwrap();
        assert!(s.contains("\"regime\":\"clean\""));
        let back: CertificateRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rec);
    }
}
