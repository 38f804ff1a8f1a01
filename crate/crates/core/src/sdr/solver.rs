use std::collections::VecDeque;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{rank1_ratio, BigMatrix, SdrSolution};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Options for the splitting solver. JSON keys: `tol`, `max_iter`, `rho0`, `adapt`,
/// plus the optional `anderson_memory` and `rho_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative stopping tolerance on both residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty; `rho_scale · ‖C‖_F/(ℓ+1)` when absent.
    pub rho0: Option<f64>,
    /// Residual balancing of the penalty (factor 2 every 50 iterations).
    pub adapt: bool,
    /// Anderson history length; 0 gives plain Douglas–Rachford.
    pub anderson_memory: usize,
    pub rho_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter: 50_000, rho0: None, adapt: false, anderson_memory: 10, rho_scale: 0.1 }
    }
}

impl SolverOptions {
    pub fn from_json(s: &str) -> Result<Self> {
        let o: Self = serde_json::from_str(s)?;
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(r) = self.rho0 {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("rho0 must be positive, got {r}")));
            }
        }
        if !(self.rho_scale > 0.0 && self.rho_scale.is_finite()) {
            return Err(Error::InvalidArgument("rho_scale must be positive".into()));
        }
        Ok(())
    }
}

const SAFEGUARD: f64 = 1.0;
// Plain steps taken after a rejected candidate before acceleration resumes.
const COOLDOWN: usize = 10;
const NORM_CAP: f64 = 10.0;
const ADAPT_EVERY: usize = 50;
const ADAPT_MU: f64 = 10.0;

struct Step<T: Real> {
    g: Vec<T>,
    x: BigMatrix<T>,
    z: BigMatrix<T>,
    fnorm: T,
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&a| a * a).sum::<T>().sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

// Solves the small dense system by Gaussian elimination with partial pivoting.
fn solve_small<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let m = b.len();
    for k in 0..m {
        let p = (k..m).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[p][k].abs() == T::zero() || !a[p][k].is_finite() {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..m {
            let f = a[i][k] / a[k][k];
            for j in k..m {
                let akj = a[k][j];
                a[i][j] -= f * akj;
            }
            let bk = b[k];
            b[i] -= f * bk;
        }
    }
    let mut x = vec![T::zero(); m];
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in k + 1..m {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Douglas–Rachford splitting between `{tr(CW) + affine constraints}` and the PSD
/// cone, with safeguarded type-II Anderson acceleration on the governing sequence.
/// The returned objective is `tr(CW)`; callers add their constants.
pub fn solve_with<T: Real>(
    cost: &BigMatrix<T>,
    opts: &SolverOptions,
    project: impl Fn(&mut BigMatrix<T>),
) -> Result<SdrSolution<T>> {
    opts.validate()?;
    if !cost.is_finite() {
        return Err(Error::InvalidArgument("cost matrix has non-finite entries".into()));
    }
    let ell = cost.ell();
    let cnorm = cost.frobenius();
    let base = if cnorm > T::zero() { cnorm / T::from_count(ell + 1) } else { T::one() };
    let mut rho = match opts.rho0 {
        Some(r) => T::c(r),
        None => base * T::c(opts.rho_scale),
    };
    let tol = T::c(opts.tol);
    let dual_scale = T::one().max(cnorm);
    let n = cost.dim();

    let eval = |s: &[T], rho: T| -> Result<Step<T>> {
        let mut x = BigMatrix::zeros(ell);
        let inv = T::one() / rho;
        for ((xv, &sv), &cv) in x.as_mut_slice().iter_mut().zip(s).zip(cost.as_slice()) {
            *xv = sv - cv * inv;
        }
        project(&mut x);
        let mut v = SymMatrix::zeros(n);
        for ((vv, &xv), &sv) in v.as_mut_slice().iter_mut().zip(x.as_slice()).zip(s) {
            *vv = xv + xv - sv;
        }
        let z = BigMatrix::from_sym(v.psd_part()?)?;
        let mut g = s.to_vec();
        let mut f2 = T::zero();
        for ((gv, &zv), &xv) in g.iter_mut().zip(z.as_slice()).zip(x.as_slice()) {
            let d = zv - xv;
            *gv += d;
            f2 += d * d;
        }
        Ok(Step { g, x, z, fnorm: f2.sqrt() })
    };

    let mut s = vec![T::zero(); n * n];
    let mut cur = eval(&s, rho)?;
    let mut iterations = 1;
    let mut rejected = 0;
    let mem = opts.anderson_memory;
    // History of residuals f = g - s and images g.
    let mut fs: VecDeque<Vec<T>> = VecDeque::new();
    let mut gs: VecDeque<Vec<T>> = VecDeque::new();
    let push = |fs: &mut VecDeque<Vec<T>>, gs: &mut VecDeque<Vec<T>>, s: &[T], st: &Step<T>| {
        fs.push_back(st.g.iter().zip(s).map(|(&g, &sv)| g - sv).collect());
        gs.push_back(st.g.clone());
        while fs.len() > mem + 1 {
            fs.pop_front();
            gs.pop_front();
        }
    };
    push(&mut fs, &mut gs, &s, &cur);

    let mut z_prev = cur.z.clone();
    let mut primal = T::infinity();
    let mut dual = T::infinity();
    let mut best: Option<(T, BigMatrix<T>, T, T)> = None;
    let mut converged = false;
    let mut cooldown = 0usize;

    while iterations < opts.max_iter {
        let accelerate = mem > 0 && fs.len() >= 2 && cooldown == 0;
        cooldown = cooldown.saturating_sub(1);
        let mut cand: Vec<T> = if accelerate {
            anderson_candidate(&fs, &gs).unwrap_or_else(|| cur.g.clone())
        } else {
            cur.g.clone()
        };
        // Feasible iterates have ‖W‖_F ≤ ℓ + 1, so a governing sequence far beyond
        // ‖C‖/ρ only means extrapolation along a flat direction, where rounding
        // eventually swallows the cost.
        let cap = T::c(NORM_CAP) * (cnorm / rho + T::from_count(ell + 2));
        let mut accelerate = accelerate;
        if accelerate && norm(&cand) > cap {
            rejected += 1;
            cooldown = COOLDOWN;
            accelerate = false;
            cand = cur.g.clone();
            fs.clear();
            gs.clear();
        }
        let mut next = eval(&cand, rho)?;
        iterations += 1;
        let mut s_new = cand;
        if accelerate && next.fnorm > T::c(SAFEGUARD) * cur.fnorm {
            rejected += 1;
            cooldown = COOLDOWN;
            s_new = cur.g.clone();
            next = eval(&s_new, rho)?;
            iterations += 1;
            fs.clear();
            gs.clear();
        }
        s = s_new;
        cur = next;
        if !cur.fnorm.is_finite() {
            return Err(Error::Numerical("splitting iterate became non-finite".into()));
        }
        push(&mut fs, &mut gs, &s, &cur);

        let scale = T::one().max(cur.x.frobenius()).max(cur.z.frobenius());
        primal = cur.fnorm / scale;
        dual = rho * cur.z.sub(&z_prev).frobenius() / dual_scale;
        z_prev = cur.z.clone();
        let mut zp = cur.z.clone();
        project(&mut zp);
        let infeas = zp.sub(&cur.z).frobenius() / scale;
        primal = primal.max(infeas);
        let merit = primal.max(dual);
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, cur.z.clone(), primal, dual));
        }
        if iterations % 500 < 2 {
            debug!("iter {iterations}: primal {primal:e} dual {dual:e} rho {rho:e} rejected {rejected}");
        }
        if merit <= tol {
            converged = true;
            break;
        }
        if opts.adapt && iterations % ADAPT_EVERY == 0 {
            let rp = cur.fnorm;
            let rd = dual * dual_scale;
            let lo = base * T::c(1e-4);
            let hi = base * T::c(1e4);
            let new_rho = if rp > T::c(ADAPT_MU) * rd {
                (rho * T::c(2.0)).min(hi)
            } else if rd > T::c(ADAPT_MU) * rp {
                (rho * T::c(0.5)).max(lo)
            } else {
                rho
            };
            if new_rho != rho {
                // Keep the scaled multiplier ρ(s - x) fixed across the change.
                let ratio = rho / new_rho;
                for (sv, &xv) in s.iter_mut().zip(cur.x.as_slice()) {
                    *sv = xv + (*sv - xv) * ratio;
                }
                rho = new_rho;
                cur = eval(&s, rho)?;
                iterations += 1;
                fs.clear();
                gs.clear();
                push(&mut fs, &mut gs, &s, &cur);
            }
        }
    }

    let (w, primal, dual) = if converged {
        (cur.z, primal, dual)
    } else {
        match best {
            Some((_, z, p, d)) => (z, p, d),
            None => (cur.z, primal, dual),
        }
    };
    let values = w.eigvals()?;
    let objective = cost.inner(&w);
    Ok(SdrSolution {
        rank1_ratio: rank1_ratio(&values),
        w,
        objective,
        primal_residual: primal,
        dual_residual: dual,
        iterations,
        converged,
        rho,
        rejected_steps: rejected,
    })
}

fn anderson_candidate<T: Real>(fs: &VecDeque<Vec<T>>, gs: &VecDeque<Vec<T>>) -> Option<Vec<T>> {
    let m = fs.len() - 1;
    let n = fs[0].len();
    let df: Vec<Vec<T>> = (0..m).map(|k| (0..n).map(|i| fs[k + 1][i] - fs[k][i]).collect()).collect();
    let mut a = vec![vec![T::zero(); m]; m];
    for i in 0..m {
        for j in 0..=i {
            let v = dot(&df[i], &df[j]);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let tr: T = (0..m).map(|i| a[i][i]).sum();
    if !(tr > T::zero()) {
        return None;
    }
    let reg = T::c(1e-10) * tr;
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += reg;
    }
    let last = &fs[m];
    let b: Vec<T> = df.iter().map(|d| dot(d, last)).collect();
    let gamma = solve_small(a, b)?;
    let mut cand = gs[m].clone();
    for (k, &gk) in gamma.iter().enumerate() {
        for i in 0..n {
            cand[i] -= gk * (gs[k + 1][i] - gs[k][i]);
        }
    }
    (norm(&cand).is_finite()).then_some(cand)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_solver() {
        let x = solve_small::<f64>(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_small(vec![vec![0.0]], vec![1.0]).is_none());
    }

    #[test]
    fn options_json() {
        let o = SolverOptions::from_json(r#"{"tol":1e-7,"max_iter":10,"rho0":2.0,"adapt":true}"#).unwrap();
        assert_eq!(o.max_iter, 10);
        assert_eq!(o.rho0, Some(2.0));
        assert!(o.adapt);
        assert_eq!(o.anderson_memory, 10);
        assert!(SolverOptions::from_json(r#"{"tol":-1}"#).is_err());
    }
}
