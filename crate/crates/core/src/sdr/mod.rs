//! The lifted program over `4(ℓ+1)`-square block matrices: assembly of the cost,
//! lifts of quaternion/decision pairs, the constraint projections, the splitting
//! solver and rank-one extraction. The block-diagonal-constrained variant lives in
//! [`yc`].

mod solver;
pub mod yc;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

pub use solver::{solve_with, SolverOptions};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat4, SymMatrix, Vec4};
use crate::rotmath::{DataMatrix, UnitQuaternion};
use crate::scalar::Real;
use crate::tls::TruncationParams;

/// Symmetric matrix of size `4(ℓ+1)` addressed in 4x4 blocks `0..=ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BigMatrix<T: Real> {
    ell: usize,
    m: SymMatrix<T>,
}

impl<T: Real> BigMatrix<T> {
    pub fn zeros(ell: usize) -> Self {
        BigMatrix { ell, m: SymMatrix::zeros(4 * (ell + 1)) }
    }

    pub fn from_sym(m: SymMatrix<T>) -> Result<Self> {
        let n = m.dim();
        if n < 8 || n % 4 != 0 {
            return invalid(format!("dimension {n} is not 4(ℓ+1) with ℓ ≥ 1"));
        }
        Ok(BigMatrix { ell: n / 4 - 1, m })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn block(&self, i: usize, j: usize) -> Mat4<T> {
        self.m.block4(i, j)
    }

    /// Writes block `(i, j)` and its transpose at `(j, i)`.
    pub fn set_block(&mut self, i: usize, j: usize, b: &Mat4<T>) {
        self.m.set_block4(i, j, b);
    }

    pub fn into_inner(self) -> SymMatrix<T> {
        self.m
    }

    /// The matrix `B` with `[B]₀₀ = I` and zeros elsewhere.
    pub fn b_matrix(ell: usize) -> Self {
        let mut b = Self::zeros(ell);
        b.set_block(0, 0, &Mat4::identity());
        b
    }

    /// `𝔀𝔀ᵀ` for a stacked vector of `ℓ+1` 4-blocks.
    pub fn outer(blocks: &[Vec4<T>]) -> Self {
        let ell = blocks.len() - 1;
        let mut out = Self::zeros(ell);
        for i in 0..=ell {
            for j in 0..=i {
                out.set_block(i, j, &blocks[i].outer(&blocks[j]));
            }
        }
        out
    }

    /// `zᵀ M z` for blocks `z₀..z_ℓ`.
    pub fn quad_blocks(&self, z: &[Vec4<T>]) -> T {
        let flat: Vec<T> = z.iter().flat_map(|v| v.0).collect();
        self.m.quad(&flat)
    }
}

impl<T: Real> Deref for BigMatrix<T> {
    type Target = SymMatrix<T>;
    fn deref(&self) -> &SymMatrix<T> {
        &self.m
    }
}

impl<T: Real> DerefMut for BigMatrix<T> {
    fn deref_mut(&mut self) -> &mut SymMatrix<T> {
        &mut self.m
    }
}

pub(crate) fn check_qc<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<()> {
    if qs.is_empty() {
        return invalid("need at least one pair");
    }
    if qs.len() != c.len() {
        return invalid(format!("{} data matrices but {} thresholds", qs.len(), c.len()));
    }
    Ok(())
}

/// `(Q_i - c_i² I)/2`.
pub fn half_shifted<T: Real>(q: &DataMatrix<T>, c2: T) -> Mat4<T> {
    (*q.matrix() - Mat4::scalar(c2)).scale(T::c(0.5))
}

/// Cost matrix `𝒬`: `[𝒬]₀ᵢ = [𝒬]ᵢ₀ = (Q_i - c_i²I)/2`, every other block zero.
pub fn assemble_big_q<T: Real>(qs: &[DataMatrix<T>], c: &TruncationParams<T>) -> Result<BigMatrix<T>> {
    check_qc(qs, c)?;
    let mut big = BigMatrix::zeros(qs.len());
    for (i, q) in qs.iter().enumerate() {
        big.set_block(0, i + 1, &half_shifted(q, c.get(i)));
    }
    Ok(big)
}

/// Stacked vector `[w₀; θ₁w₀; …; θ_ℓw₀]`.
pub fn lift_vector<T: Real>(w0: &UnitQuaternion<T>, theta: &[bool]) -> Vec<Vec4<T>> {
    let w = *w0.as_vec();
    std::iter::once(w).chain(theta.iter().map(|&t| if t { w } else { Vec4::zeros() })).collect()
}

/// Rank-one lift `𝔀𝔀ᵀ`.
pub fn lift<T: Real>(w0: &UnitQuaternion<T>, theta: &[bool]) -> BigMatrix<T> {
    BigMatrix::outer(&lift_vector(w0, theta))
}

/// `tr(𝒬W) + Σc_i²`.
pub fn sdr_objective<T: Real>(big_q: &BigMatrix<T>, w: &BigMatrix<T>, c: &TruncationParams<T>) -> T {
    big_q.inner(w) + c.sum()
}

/// Largest violation of `tr[W]₀₀ = 1` and `[W]₀ᵢ = [W]ᵢᵢ` (max-abs entry).
pub fn sdr_feasibility<T: Real>(w: &BigMatrix<T>) -> T {
    let mut r = (w.block(0, 0).trace() - T::one()).abs();
    for i in 1..=w.ell() {
        r = r.max((w.block(0, i) - w.block(i, i)).max_abs());
    }
    r
}

/// Frobenius-nearest matrix satisfying `[W]₀ᵢ = [W]ᵢ₀ = [W]ᵢᵢ` and `tr[W]₀₀ = 1`.
pub fn project_affine<T: Real>(y: &mut BigMatrix<T>) {
    let third = T::one() / T::c(3.0);
    for i in 1..=y.ell() {
        let a = y.block(0, i);
        let s = y.block(i, i);
        let x = (a + a.transpose() + s).scale(third);
        y.set_block(0, i, &x);
        y.set_block(i, i, &x);
    }
    let b00 = y.block(0, 0);
    let shift = (T::one() - b00.trace()) * T::c(0.25);
    y.set_block(0, 0, &(b00 + Mat4::scalar(shift)));
}

/// Result of a solver run.
#[derive(Clone, Debug)]
pub struct SdrSolution<T: Real> {
    /// Final positive-semidefinite iterate.
    pub w: BigMatrix<T>,
    pub objective: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: usize,
    pub rank1_ratio: T,
    pub converged: bool,
    /// Penalty in force at exit.
    pub rho: T,
    /// Anderson candidates rejected by the safeguard.
    pub rejected_steps: usize,
}

impl<T: Real> SdrSolution<T> {
    /// Solver-level tightness: objective within `max(1e-6, 1e-6·v)` of the TLS value
    /// `v` and rank-one ratio at least `1e6`.
    pub fn is_tight(&self, tls_value: T) -> bool {
        solver_tight(self.objective, self.rank1_ratio, tls_value)
    }
}

pub fn solver_tight<T: Real>(objective: T, rank1_ratio: T, tls_value: T) -> bool {
    let tol = T::c(1e-6).max(T::c(1e-6) * tls_value.abs());
    (objective - tls_value).abs() <= tol && rank1_ratio >= T::c(1e6)
}

/// Solves the relaxation with cost `𝒬`. Non-convergence is reported through
/// `converged`, never as an error.
pub fn solve_sdr<T: Real>(big_q: &BigMatrix<T>, c: &TruncationParams<T>, opts: &SolverOptions) -> Result<SdrSolution<T>> {
    if big_q.ell() != c.len() {
        return invalid("cost matrix and thresholds disagree on ℓ");
    }
    let mut sol = solve_with(big_q, opts, project_affine)?;
    sol.objective = sdr_objective(big_q, &sol.w, c);
    Ok(sol)
}

/// Leading eigenvector's block 0, normalised, and `λ₁/λ₂` (infinite when `λ₂` is
/// negligible).
pub fn extract_quaternion<T: Real>(w: &BigMatrix<T>) -> Result<(UnitQuaternion<T>, T)> {
    let e = w.eigh()?;
    let n = e.dim();
    let v = e.vector(n - 1);
    let b0 = Vec4::new(v[0], v[1], v[2], v[3]);
    if b0.norm() < T::c(1e-6) {
        return Err(Error::DegenerateExtraction(format!("leading eigenvector block 0 has norm {}", b0.norm())));
    }
    Ok((UnitQuaternion::from_vector(b0)?, rank1_ratio(&e.values)))
}

pub(crate) fn rank1_ratio<T: Real>(values: &[T]) -> T {
    let n = values.len();
    let l1 = values[n - 1];
    let l2 = values[n - 2];
    if l2 <= T::epsilon() * T::from_count(n) * l1.abs() {
        T::infinity()
    } else {
        l1 / l2
    }
}

/// Serialisable digest of an [`SdrSolution`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdrSummary {
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    #[serde(with = "crate::jsonf")]
    pub rank1_ratio: f64,
    pub converged: bool,
    pub w_hat: Option<[f64; 4]>,
    pub tls_value: Option<f64>,
    pub solver_tight: Option<bool>,
}

impl SdrSummary {
    pub fn new<T: Real>(sol: &SdrSolution<T>, tls_value: Option<T>) -> Self {
        let w_hat = extract_quaternion(&sol.w).ok().map(|(q, _)| q.as_vec().cast::<f64>().0);
        SdrSummary {
            objective: sol.objective.to_f64_lossy(),
            primal_residual: sol.primal_residual.to_f64_lossy(),
            dual_residual: sol.dual_residual.to_f64_lossy(),
            iterations: sol.iterations,
            rank1_ratio: sol.rank1_ratio.to_f64_lossy(),
            converged: sol.converged,
            w_hat,
            tls_value: tls_value.map(|v| v.to_f64_lossy()),
            solver_tight: tls_value.map(|v| sol.is_tight(v)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_instance, GenConfig};
    use crate::tls::tls_objective;

    fn clean(ell: usize, seed: u64) -> (Vec<DataMatrix<f64>>, TruncationParams<f64>, UnitQuaternion<f64>) {
        let inst = gen_instance::<f64>(&GenConfig::clean(ell, seed)).unwrap();
        (inst.data_matrices(), TruncationParams::uniform(1.0, ell).unwrap(), inst.w_star())
    }

    #[test]
    fn single_pair_layout() {
        let (qs, c, _) = clean(1, 0);
        let big = assemble_big_q(&qs, &c).unwrap();
        assert_eq!(big.dim(), 8);
        assert_eq!(big.block(0, 0), Mat4::zeros());
        assert_eq!(big.block(1, 1), Mat4::zeros());
        assert_eq!(big.block(0, 1), half_shifted(&qs[0], 1.0));
        assert_eq!(big.trace(), 0.0);
    }

    #[test]
    fn lift_objective_matches_tls() {
        let (qs, c, _) = clean(6, 4);
        let big = assemble_big_q(&qs, &c).unwrap();
        let w = UnitQuaternion::new(Vec4::new(0.5, -0.5, 0.5, 0.5)).unwrap();
        let theta: Vec<bool> = qs.iter().map(|q| q.residual(w.as_vec()) < 1.0).collect();
        let l = lift(&w, &theta);
        assert!(sdr_feasibility(&l) < 1e-15);
        let v = sdr_objective(&big, &l, &c);
        assert!((v - tls_objective(&w, &qs, &c).unwrap()).abs() < 1e-12);
        let none = lift(&w, &[false; 6]);
        assert!((sdr_objective(&big, &none, &c) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn projection_idempotent() {
        let (qs, c, _) = clean(3, 1);
        let mut y = assemble_big_q(&qs, &c).unwrap();
        for i in 0..y.dim() {
            let v = y.get(i, i) + 0.1 * i as f64;
            y.set_sym(i, i, v);
        }
        project_affine(&mut y);
        assert!(sdr_feasibility(&y) < 1e-14);
        let mut z = y.clone();
        project_affine(&mut z);
        assert!(z.sub(&y).max_abs() < 1e-12);
    }

    #[test]
    fn extraction_from_exact_lift() {
        let (_, _, w) = clean(4, 2);
        let (q, r) = extract_quaternion(&lift(&w, &[true; 4])).unwrap();
        assert!((q.dot(&w).abs() - 1.0).abs() < 1e-12);
        assert!(r.is_infinite());
    }

    #[test]
    fn degenerate_extraction() {
        let mut w = BigMatrix::<f64>::zeros(2);
        w.set_block(1, 1, &Mat4::identity());
        assert!(matches!(extract_quaternion(&w), Err(Error::DegenerateExtraction(_))));
    }

    #[test]
    fn clean_solve_is_tight() {
        let (qs, c, w) = clean(10, 5);
        let big = assemble_big_q(&qs, &c).unwrap();
        let sol = solve_sdr(&big, &c, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "{} iterations", sol.iterations);
        assert!(sol.objective.abs() < 1e-7, "{}", sol.objective);
        assert!(sol.rank1_ratio >= 1e6);
        let (q, _) = extract_quaternion(&sol.w).unwrap();
        assert!((q.dot(&w).abs() - 1.0).abs() < 1e-8);
    }
}
