//! Truncated least-squares objective, an exhaustive global solver for small
//! instances, and the solver that is handed the inlier/outlier split.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh_small, Mat4, Vec4};
use crate::rotmath::{DataMatrix, UnitQuaternion};
use crate::scalar::Real;

/// Largest instance [`tls_bruteforce`] accepts.
pub const BRUTEFORCE_MAX_ELL: usize = 16;

/// Relative width of the band `|ŵᵀQŵ - c²| ≤ TIE_REL · c²` treated as a tie.
pub const TIE_REL: f64 = 1e-9;

/// Per-pair truncation thresholds `c_i²`, all strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TruncationParams<T: Real> {
    c_sq: Vec<T>,
}

impl<T: Real> TruncationParams<T> {
    pub fn new(c_sq: Vec<T>) -> Result<Self> {
        if let Some((i, c)) = c_sq.iter().enumerate().find(|(_, c)| !(**c > T::zero() && c.is_finite())) {
            return invalid(format!("c_sq[{i}] = {c} must be positive and finite"));
        }
        Ok(TruncationParams { c_sq })
    }

    /// The same threshold for all `ell` pairs.
    pub fn uniform(c_sq: T, ell: usize) -> Result<Self> {
        Self::new(vec![c_sq; ell])
    }

    pub fn len(&self) -> usize {
        self.c_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_sq.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.c_sq
    }

    pub fn get(&self, i: usize) -> T {
        self.c_sq[i]
    }

    pub fn sum(&self) -> T {
        self.c_sq.iter().copied().sum()
    }

    pub fn sum_over(&self, idx: impl IntoIterator<Item = usize>) -> T {
        idx.into_iter().map(|i| self.c_sq[i]).sum()
    }
}

/// A TLS estimate with the per-pair keep/reject decisions and diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TlsSolution<T: Real> {
    pub w_hat: UnitQuaternion<T>,
    /// `true` for kept pairs.
    pub theta: Vec<bool>,
    pub value: T,
    /// The smallest eigenvalue of the kept sum is (numerically) repeated.
    pub min_eig_multiplicity_flag: bool,
    /// Some residual sits within the tie band of its threshold.
    pub tie_flag: bool,
    /// Residuals agree with the keep/reject pattern.
    pub consistent: bool,
    pub lambda_min: T,
    pub lambda_min2: T,
}

impl<T: Real> TlsSolution<T> {
    pub fn kept(&self) -> Vec<usize> {
        self.theta.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect()
    }
}

fn check_lengths<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<()> {
    if qs.len() != c.len() {
        return invalid(format!("{} data matrices but {} thresholds", qs.len(), c.len()));
    }
    Ok(())
}

/// `Σ_{i ∈ idx} Q_i`.
pub fn sum_q<T: Real>(qs: &[DataMatrix<T>], idx: impl IntoIterator<Item = usize>) -> Mat4<T> {
    let mut s = Mat4::zeros();
    for i in idx {
        s += *qs[i].matrix();
    }
    s
}

/// `Σ_i min{wᵀQ_iw, c_i²}`.
pub fn tls_objective<T: Real>(w: &UnitQuaternion<T>, qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<T> {
    check_lengths(qs, c)?;
    Ok(qs.iter().zip(c.as_slice()).map(|(q, &c2)| q.residual(w.as_vec()).min(c2)).sum())
}

fn is_tie<T: Real>(r: T, c2: T) -> bool {
    (r - c2).abs() <= T::tol(TIE_REL) * c2
}

fn multiplicity<T: Real>(l1: T, l2: T, scale: T) -> bool {
    (l2 - l1) <= T::tol(1e-9) * scale.max(T::one())
}

/// Exact global minimiser by enumerating all `2^ℓ` keep/reject patterns.
///
/// For a pattern `S` the best value is `λ_min(Σ_S Q_i) + Σ_{i∉S} c_i²`; the winning
/// pattern's eigenvector is returned with `θ` re-derived from its residuals. Ties in
/// value go to the lexicographically smaller pattern mask.
pub fn tls_bruteforce<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<TlsSolution<T>> {
    check_lengths(qs, c)?;
    let ell = qs.len();
    if ell > BRUTEFORCE_MAX_ELL {
        return Err(Error::UnsupportedSize(format!(
            "bruteforce enumeration supports ell <= {BRUTEFORCE_MAX_ELL}, got {ell}"
        )));
    }
    if ell == 0 {
        return invalid("empty instance");
    }
    let total_c = c.sum();
    let mut best: Option<(T, u32)> = None;
    for mask in 0u32..(1u32 << ell) {
        let mut s = Mat4::zeros();
        let mut rejected = total_c;
        for i in 0..ell {
            if mask & (1 << i) != 0 {
                s += *qs[i].matrix();
                rejected -= c.get(i);
            }
        }
        let lmin = if mask == 0 { T::zero() } else { eigh_small(&s).min() };
        let v = lmin + rejected;
        if best.map_or(true, |(b, _)| v < b) {
            best = Some((v, mask));
        }
    }
    let (_, mask) = best.expect("at least one pattern");
    let kept: Vec<usize> = (0..ell).filter(|i| mask & (1 << i) != 0).collect();
    let (w, l1, l2) = if kept.is_empty() {
        (UnitQuaternion::identity(), T::zero(), T::zero())
    } else {
        let e = eigh_small(&sum_q(qs, kept.iter().copied()));
        (UnitQuaternion::from_vector(e.vector(0))?, e.values[0], e.values[1])
    };
    let mut theta = Vec::with_capacity(ell);
    let mut tie = false;
    for i in 0..ell {
        let r = qs[i].residual(w.as_vec());
        tie |= is_tie(r, c.get(i));
        theta.push(r < c.get(i));
    }
    let value = tls_objective(&w, qs, c)?;
    let mult = !kept.is_empty() && multiplicity(l1, l2, l1.abs().max(l2.abs()));
    Ok(TlsSolution {
        w_hat: w,
        theta,
        value,
        min_eig_multiplicity_flag: mult,
        tie_flag: tie,
        consistent: true,
        lambda_min: l1,
        lambda_min2: l2,
    })
}

/// Solution for a given inlier set: `ŵ` is the bottom eigenvector of the kept sum.
/// Violations of `ŵᵀQ_iŵ < c_i²` (kept) or `> c_j²` (rejected) clear the
/// `consistent` flag rather than erroring.
pub fn tls_by_classification<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
    inlier_set: &[usize],
) -> Result<TlsSolution<T>> {
    check_lengths(qs, c)?;
    let ell = qs.len();
    if inlier_set.is_empty() {
        return invalid("inlier set must be nonempty");
    }
    let mut theta = vec![false; ell];
    for &i in inlier_set {
        if i >= ell {
            return invalid(format!("inlier index {i} out of range"));
        }
        theta[i] = true;
    }
    let e = eigh_small(&sum_q(qs, inlier_set.iter().copied()));
    let w = UnitQuaternion::from_vector(e.vector(0))?;
    let mut consistent = true;
    let mut tie = false;
    let mut value = T::zero();
    for i in 0..ell {
        let r = qs[i].residual(w.as_vec());
        let c2 = c.get(i);
        tie |= is_tie(r, c2);
        if theta[i] {
            consistent &= r < c2;
            value += r;
        } else {
            consistent &= r > c2;
            value += c2;
        }
    }
    let (l1, l2) = (e.values[0], e.values[1]);
    Ok(TlsSolution {
        w_hat: w,
        theta,
        value,
        min_eig_multiplicity_flag: multiplicity(l1, l2, l1.abs().max(l2.abs())),
        tie_flag: tie,
        consistent: consistent && !tie,
        lambda_min: l1,
        lambda_min2: l2,
    })
}

/// `‖(Σ_kept Q_i)ŵ - (Σ_kept ŵᵀQ_iŵ)ŵ‖`, zero when `ŵ` is an eigenvector of the kept sum.
pub fn eigenvector_residual<T: Real>(qs: &[DataMatrix<T>], sol: &TlsSolution<T>) -> T {
    let kept = sol.kept();
    let s = sum_q(qs, kept.iter().copied());
    let w: &Vec4<T> = sol.w_hat.as_vec();
    let lam: T = kept.iter().map(|&i| qs[i].residual(w)).sum();
    (s.mul_vec(w) - w.scale(lam)).norm()
}
