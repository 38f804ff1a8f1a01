use super::small::{Mat, Vector};
use crate::scalar::Real;

/// Eigen-decomposition of a small symmetric matrix. Eigenvalues ascend; column `k`
/// of `vectors` is the unit eigenvector for `values[k]`.
#[derive(Clone, Copy, Debug)]
pub struct SmallEigen<T, const N: usize> {
    pub values: Vector<T, N>,
    pub vectors: Mat<T, N>,
}

impl<T: Real, const N: usize> SmallEigen<T, N> {
    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[N - 1]
    }

    pub fn vector(&self, k: usize) -> Vector<T, N> {
        self.vectors.col(k)
    }
}

/// Cyclic Jacobi on a symmetric matrix (only the symmetric part is used). Sweeps stop
/// once the off-diagonal Frobenius norm falls below `1e-13 * ‖A‖_F` (floored at a few ulps).
pub fn eigh_small<T: Real, const N: usize>(m: &Mat<T, N>) -> SmallEigen<T, N> {
    let mut a = m.symmetrized();
    let mut v = Mat::<T, N>::identity();
    let thresh = T::tol(1e-13) * a.frobenius();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..N {
            for q in p + 1..N {
                off += a.0[p][q] * a.0[p][q];
            }
        }
        if (off + off).sqrt() <= thresh || off == T::zero() {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let apq = a.0[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.0[q][q] - a.0[p][p]) / (apq + apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a.0[k][p];
                    let akq = a.0[k][q];
                    a.0[k][p] = c * akp - s * akq;
                    a.0[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a.0[p][k];
                    let aqk = a.0[q][k];
                    a.0[p][k] = c * apk - s * aqk;
                    a.0[q][k] = s * apk + c * aqk;
                }
                a.0[p][q] = T::zero();
                a.0[q][p] = T::zero();
                for k in 0..N {
                    let vkp = v.0[k][p];
                    let vkq = v.0[k][q];
                    v.0[k][p] = c * vkp - s * vkq;
                    v.0[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: [usize; N] = std::array::from_fn(|i| i);
    idx.sort_by(|&i, &j| a.0[i][i].partial_cmp(&a.0[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut values = Vector::zeros();
    let mut vectors = Mat::zeros();
    for (k, &i) in idx.iter().enumerate() {
        values.0[k] = a.0[i][i];
        for r in 0..N {
            vectors.0[r][k] = v.0[r][i];
        }
    }
    SmallEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::small::Mat4;

    #[test]
    fn reconstructs_random_symmetric() {
        let m = Mat4::<f64>::from_row_major(&[
            4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.5, -2.0, 0.0, -1.0, 2.0, 0.5, 1.5, 2.0, 0.0,
        ])
        .unwrap();
        let e = eigh_small(&m);
        let mut r = Mat4::zeros();
        for k in 0..4 {
            let v = e.vector(k);
            r += v.outer(&v).scale(e.values[k]);
        }
        assert!((r - m).max_abs() < 1e-12);
        for k in 1..4 {
            assert!(e.values[k - 1] <= e.values[k]);
        }
    }

    #[test]
    fn diagonal_input_is_fixed_point() {
        let m = Mat4::<f64>::from_diag(&Vector([3.0, -1.0, 2.0, 0.0]));
        let e = eigh_small(&m);
        assert_eq!(e.values.0, [-1.0, 0.0, 2.0, 3.0]);
    }
}
