//! The relaxation whose diagonal blocks are all constrained equal, and whose cost
//! adds the block-diagonal matrix `𝒬′` with `[𝒬′]ᵢᵢ = Q_i`.

use super::{assemble_big_q, check_qc, solve_with, BigMatrix, SdrSolution, SolverOptions};
use crate::error::{invalid, Result};
use crate::linalg::{Mat4, Vec4};
use crate::rotmath::{DataMatrix, UnitQuaternion};
use crate::scalar::Real;
use crate::tls::TruncationParams;

/// `(𝒬′, 𝒬)`.
pub fn assemble_big_q_yc<T: Real>(
    qs: &[DataMatrix<T>],
    c: &TruncationParams<T>,
) -> Result<(BigMatrix<T>, BigMatrix<T>)> {
    check_qc(qs, c)?;
    let mut qp = BigMatrix::zeros(qs.len());
    for (i, q) in qs.iter().enumerate() {
        qp.set_block(i + 1, i + 1, q.matrix());
    }
    Ok((qp, assemble_big_q(qs, c)?))
}

/// `½tr(𝒬′A) + ½tr(𝒬A) + ½Σc_i²`.
pub fn yc_objective<T: Real>(qp: &BigMatrix<T>, q: &BigMatrix<T>, a: &BigMatrix<T>, c: &TruncationParams<T>) -> T {
    (qp.inner(a) + q.inner(a) + c.sum()) * T::c(0.5)
}

/// Lift of `[w₀; s₁w₀; …; s_ℓw₀]` with signs `s_i = +1` for kept pairs, `-1` otherwise.
pub fn lift_yc<T: Real>(w0: &UnitQuaternion<T>, keep: &[bool]) -> BigMatrix<T> {
    let w = *w0.as_vec();
    let blocks: Vec<Vec4<T>> = std::iter::once(w).chain(keep.iter().map(|&k| if k { w } else { -w })).collect();
    BigMatrix::outer(&blocks)
}

/// Frobenius-nearest matrix with all diagonal blocks equal and `tr[A]₀₀ = 1`.
pub fn project_affine_yc<T: Real>(y: &mut BigMatrix<T>) {
    let ell = y.ell();
    let mut m = Mat4::zeros();
    for i in 0..=ell {
        m += y.block(i, i);
    }
    let m = m.scale(T::one() / T::from_count(ell + 1));
    let m = m + Mat4::scalar((T::one() - m.trace()) * T::c(0.25));
    for i in 0..=ell {
        y.set_block(i, i, &m);
    }
}

/// Largest violation of the block-equality and trace constraints.
pub fn yc_feasibility<T: Real>(a: &BigMatrix<T>) -> T {
    let b0 = a.block(0, 0);
    let mut r = (b0.trace() - T::one()).abs();
    for i in 1..=a.ell() {
        r = r.max((a.block(i, i) - b0).max_abs());
    }
    r
}

pub fn solve_sdr_yc<T: Real>(
    qp: &BigMatrix<T>,
    q: &BigMatrix<T>,
    c: &TruncationParams<T>,
    opts: &SolverOptions,
) -> Result<SdrSolution<T>> {
    if qp.ell() != q.ell() || q.ell() != c.len() {
        return invalid("cost matrices and thresholds disagree on ℓ");
    }
    let mut cost = qp.add(q);
    cost = cost.scale(T::c(0.5));
    let cost = BigMatrix::from_sym(cost)?;
    let mut sol = solve_with(&cost, opts, project_affine_yc)?;
    sol.objective = yc_objective(qp, q, &sol.w, c);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdr::extract_quaternion;
    use crate::synth::{gen_instance, GenConfig};
    use crate::tls::tls_objective;

    #[test]
    fn lift_value_matches_tls() {
        let inst = gen_instance::<f64>(&GenConfig::gaussian(5, 5, 0.3, 2)).unwrap();
        let qs = inst.data_matrices();
        let c = TruncationParams::uniform(0.5, 5).unwrap();
        let (qp, q) = assemble_big_q_yc(&qs, &c).unwrap();
        let w = inst.w_star();
        let keep: Vec<bool> = qs.iter().map(|m| m.residual(w.as_vec()) < 0.5).collect();
        let a = lift_yc(&w, &keep);
        assert!(yc_feasibility(&a) < 1e-15);
        assert!((yc_objective(&qp, &q, &a, &c) - tls_objective(&w, &qs, &c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn projection_idempotent() {
        let inst = gen_instance::<f64>(&GenConfig::clean(3, 2)).unwrap();
        let c = TruncationParams::uniform(1.0, 3).unwrap();
        let (qp, q) = assemble_big_q_yc(&inst.data_matrices(), &c).unwrap();
        let mut y = BigMatrix::from_sym(qp.add(&q)).unwrap();
        project_affine_yc(&mut y);
        assert!(yc_feasibility(&y) < 1e-14);
        let mut z = y.clone();
        project_affine_yc(&mut z);
        assert!(z.sub(&y).max_abs() < 1e-12);
    }

    #[test]
    fn clean_solve_is_tight() {
        let inst = gen_instance::<f64>(&GenConfig::clean(8, 6)).unwrap();
        let c = TruncationParams::uniform(1.0, 8).unwrap();
        let (qp, q) = assemble_big_q_yc(&inst.data_matrices(), &c).unwrap();
        let sol = solve_sdr_yc(&qp, &q, &c, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.is_tight(0.0), "obj {} ratio {}", sol.objective, sol.rank1_ratio);
        let (w, _) = extract_quaternion(&sol.w).unwrap();
        assert!((w.dot(&inst.w_star()).abs() - 1.0).abs() < 1e-8);
    }
}
