use super::small::{Mat3, Vec3};
use crate::scalar::Real;

/// Eigenvalues of a symmetric 3x3 matrix in ascending order, via the trigonometric
/// solution of the characteristic cubic.
pub fn eigvals_sym3<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let a = m.symmetrized();
    let p1 = a[(0, 1)] * a[(0, 1)] + a[(0, 2)] * a[(0, 2)] + a[(1, 2)] * a[(1, 2)];
    if p1 == T::zero() {
        let mut d = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        return Vec3::new(d[0], d[1], d[2]);
    }
    let three = T::c(3.0);
    let q = a.trace() / three;
    let d0 = a[(0, 0)] - q;
    let d1 = a[(1, 1)] - q;
    let d2 = a[(2, 2)] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + p1 + p1;
    let p = (p2 / T::c(6.0)).sqrt();
    let b = (a - Mat3::scalar(q)).scale(T::one() / p);
    let r = (b.det() / T::c(2.0)).max(-T::one()).min(T::one());
    let phi = r.acos() / three;
    let two_p = p + p;
    let hi = q + two_p * phi.cos();
    let lo = q + two_p * (phi + T::c(2.0) * T::FRAC_PI_3()).cos();
    let mid = three * q - hi - lo;
    Vec3::new(lo, mid.max(lo).min(hi), hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi::eigh_small;

    #[test]
    fn matches_jacobi() {
        let m = Mat3::<f64>::from_row_major(&[2.0, -1.0, 0.3, -1.0, 5.0, 1.2, 0.3, 1.2, -0.7]).unwrap();
        let a = eigvals_sym3(&m);
        let b = eigh_small(&m).values;
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn repeated_eigenvalue() {
        let v = Vec3::<f64>::new(1.0, 2.0, 2.0).scale(1.0 / 3.0);
        let m = Mat3::identity() + v.outer(&v).scale(4.0);
        let e = eigvals_sym3(&m);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        assert!((e[2] - 5.0).abs() < 1e-12);
    }
}
