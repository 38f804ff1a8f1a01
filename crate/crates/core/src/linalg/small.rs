use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Real;

/// Fixed-length column vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector<T, const N: usize>(pub [T; N]);

/// Fixed-size square matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat<T, const N: usize>(pub [[T; N]; N]);

pub type Vec3<T> = Vector<T, 3>;
pub type Vec4<T> = Vector<T, 4>;
pub type Mat3<T> = Mat<T, 3>;
pub type Mat4<T> = Mat<T, 4>;

impl<T: Real, const N: usize> Default for Vector<T, N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real, const N: usize> Vector<T, N> {
    pub fn zeros() -> Self {
        Vector([T::zero(); N])
    }

    pub fn unit(k: usize) -> Self {
        let mut v = Self::zeros();
        v.0[k] = T::one();
        v
    }

    pub fn dot(&self, o: &Self) -> T {
        let mut s = T::zero();
        for i in 0..N {
            s += self.0[i] * o.0[i];
        }
        s
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, a: T) -> Self {
        let mut v = *self;
        for x in v.0.iter_mut() {
            *x *= a;
        }
        v
    }

    /// Returns `self / ‖self‖`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self.scale(T::one() / n))
        } else {
            None
        }
    }

    pub fn outer(&self, o: &Self) -> Mat<T, N> {
        let mut m = Mat::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[i] * o.0[j];
            }
        }
        m
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |a, x| a.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Vector<U, N> {
        let mut v = Vector::<U, N>::zeros();
        for i in 0..N {
            v.0[i] = U::c(self.0[i].to_f64_lossy());
        }
        v
    }
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vector([x, y, z])
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Vector([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }
}

impl<T: Real> Vec4<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Vector([a, b, c, d])
    }
}

impl<T, const N: usize> Index<usize> for Vector<T, N> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T, const N: usize> IndexMut<usize> for Vector<T, N> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real, const N: usize> Add for Vector<T, N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for i in 0..N {
            self.0[i] += o.0[i];
        }
        self
    }
}

impl<T: Real, const N: usize> Sub for Vector<T, N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..N {
            self.0[i] -= o.0[i];
        }
        self
    }
}

impl<T: Real, const N: usize> Neg for Vector<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real, const N: usize> Mul<T> for Vector<T, N> {
    type Output = Self;
    fn mul(self, a: T) -> Self {
        self.scale(a)
    }
}

impl<T: Real, const N: usize> Serialize for Vector<T, N> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de, T: Real, const N: usize> Deserialize<'de> for Vector<T, N> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<T> = Vec::deserialize(d)?;
        let arr: [T; N] = v
            .try_into()
            .map_err(|v: Vec<T>| D::Error::invalid_length(v.len(), &"fixed-length vector"))?;
        Ok(Vector(arr))
    }
}

impl<T: Real, const N: usize> Default for Mat<T, N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real, const N: usize> Mat<T, N> {
    pub fn zeros() -> Self {
        Mat([[T::zero(); N]; N])
    }

    pub fn identity() -> Self {
        Self::scalar(T::one())
    }

    pub fn scalar(a: T) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = a;
        }
        m
    }

    pub fn from_diag(d: &Vector<T, N>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d.0[i];
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[Vector<T, N>; N]) -> Self {
        let mut m = Self::zeros();
        for (j, c) in cols.iter().enumerate() {
            for i in 0..N {
                m.0[i][j] = c.0[i];
            }
        }
        m
    }

    pub fn col(&self, j: usize) -> Vector<T, N> {
        let mut v = Vector::zeros();
        for i in 0..N {
            v.0[i] = self.0[i][j];
        }
        v
    }

    pub fn row(&self, i: usize) -> Vector<T, N> {
        Vector(self.0[i])
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[j][i] = self.0[i][j];
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.0.iter().flatten().map(|&x| x * x).sum()
    }

    pub fn frobenius(&self) -> T {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |a, x| a.max(x.abs()))
    }

    pub fn scale(&self, a: T) -> Self {
        let mut m = *self;
        for x in m.0.iter_mut().flatten() {
            *x *= a;
        }
        m
    }

    pub fn mul_vec(&self, v: &Vector<T, N>) -> Vector<T, N> {
        let mut r = Vector::zeros();
        for i in 0..N {
            let mut s = T::zero();
            for j in 0..N {
                s += self.0[i][j] * v.0[j];
            }
            r.0[i] = s;
        }
        r
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                for j in 0..N {
                    r.0[i][j] += a * o.0[k][j];
                }
            }
        }
        r
    }

    /// `vᵀ M v`.
    pub fn quad(&self, v: &Vector<T, N>) -> T {
        v.dot(&self.mul_vec(v))
    }

    /// Frobenius inner product `tr(Aᵀ B)`.
    pub fn inner(&self, o: &Self) -> T {
        let mut s = T::zero();
        for i in 0..N {
            for j in 0..N {
                s += self.0[i][j] * o.0[i][j];
            }
        }
        s
    }

    pub fn symmetrized(&self) -> Self {
        let mut m = *self;
        for i in 0..N {
            for j in 0..i {
                let a = (self.0[i][j] + self.0[j][i]) * T::c(0.5);
                m.0[i][j] = a;
                m.0[j][i] = a;
            }
        }
        m
    }

    /// Largest entrywise asymmetry `|m_ij - m_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut a = T::zero();
        for i in 0..N {
            for j in 0..i {
                a = a.max((self.0[i][j] - self.0[j][i]).abs());
            }
        }
        a
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn row_major(&self) -> Vec<T> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn from_row_major(v: &[T]) -> Option<Self> {
        if v.len() != N * N {
            return None;
        }
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = v[i * N + j];
            }
        }
        Some(m)
    }

    pub fn cast<U: Real>(&self) -> Mat<U, N> {
        let mut m = Mat::<U, N>::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = U::c(self.0[i][j].to_f64_lossy());
            }
        }
        m
    }
}

impl<T: Real> Mat3<T> {
    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

impl<T, const N: usize> Index<(usize, usize)> for Mat<T, N> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.0[i][j]
    }
}

impl<T, const N: usize> IndexMut<(usize, usize)> for Mat<T, N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.0[i][j]
    }
}

impl<T: Real, const N: usize> Add for Mat<T, N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<T: Real, const N: usize> AddAssign for Mat<T, N> {
    fn add_assign(&mut self, o: Self) {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl<T: Real, const N: usize> Sub for Mat<T, N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self -= o;
        self
    }
}

impl<T: Real, const N: usize> SubAssign for Mat<T, N> {
    fn sub_assign(&mut self, o: Self) {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= o.0[i][j];
            }
        }
    }
}

impl<T: Real, const N: usize> Neg for Mat<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real, const N: usize> Mul<T> for Mat<T, N> {
    type Output = Self;
    fn mul(self, a: T) -> Self {
        self.scale(a)
    }
}

impl<T: Real, const N: usize> Mul<Vector<T, N>> for Mat<T, N> {
    type Output = Vector<T, N>;
    fn mul(self, v: Vector<T, N>) -> Vector<T, N> {
        self.mul_vec(&v)
    }
}

impl<T: Real, const N: usize> Mul for Mat<T, N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.mul_mat(&o)
    }
}
