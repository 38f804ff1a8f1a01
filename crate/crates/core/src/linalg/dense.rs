use crate::error::{Error, Result};
use crate::scalar::Real;

use super::small::{Mat4, Vec4};

/// Dense square matrix intended to hold symmetric data. Storage is column-major, which
/// for symmetric content is the same as row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

/// Full eigen-decomposition of a [`SymMatrix`]. Eigenvalues ascend and `vector(k)`
/// borrows the matching unit eigenvector.
#[derive(Clone, Debug)]
pub struct DenseEigen<T> {
    n: usize,
    pub values: Vec<T>,
    vectors: Vec<T>,
}

impl<T: Real> DenseEigen<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vector(&self, k: usize) -> &[T] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.n - 1]
    }

    /// Rebuilds `Σ f(λ_k) v_k v_kᵀ` over the eigenpairs where `f` is non-zero.
    pub fn reconstruct(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let n = self.n;
        let mut out = SymMatrix::zeros(n);
        for k in 0..n {
            let w = f(self.values[k]);
            if w == T::zero() {
                continue;
            }
            let v = self.vector(k);
            for j in 0..n {
                let a = w * v[j];
                if a == T::zero() {
                    continue;
                }
                let col = &mut out.data[j * n..(j + 1) * n];
                for i in 0..n {
                    col[i] += a * v[i];
                }
            }
        }
        out
    }
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds from row-major entries; the symmetric part is stored.
    pub fn from_row_major(n: usize, v: &[T]) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                v.len()
            )));
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[j * n + i] = (v[i * n + j] + v[j * n + i]) * T::c(0.5);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.n + i]
    }

    /// Sets entry `(i, j)` and its mirror `(j, i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: T) {
        let n = self.n;
        self.data[j * n + i] = v;
        self.data[i * n + j] = v;
    }

    /// The 4x4 block at block coordinates `(bi, bj)`.
    pub fn block4(&self, bi: usize, bj: usize) -> Mat4<T> {
        let mut m = Mat4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = self.get(4 * bi + r, 4 * bj + c);
            }
        }
        m
    }

    /// Writes block `(bi, bj)` and its transpose into `(bj, bi)`.
    pub fn set_block4(&mut self, bi: usize, bj: usize, b: &Mat4<T>) {
        let n = self.n;
        for r in 0..4 {
            for c in 0..4 {
                let (i, j) = (4 * bi + r, 4 * bj + c);
                self.data[j * n + i] = b.0[r][c];
                self.data[i * n + j] = b.0[r][c];
            }
        }
    }

    /// Entries of the 4-vector segment `bi` of `z`.
    pub fn segment4(z: &[T], bi: usize) -> Vec4<T> {
        Vec4::new(z[4 * bi], z[4 * bi + 1], z[4 * bi + 2], z[4 * bi + 3])
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, x| a.max(x.abs()))
    }

    /// Frobenius inner product `tr(A B)` for symmetric `A`, `B`.
    pub fn inner(&self, o: &Self) -> T {
        self.data.iter().zip(&o.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn mul_vec(&self, z: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for j in 0..n {
            let zj = z[j];
            if zj == T::zero() {
                continue;
            }
            let col = &self.data[j * n..(j + 1) * n];
            for i in 0..n {
                out[i] += col[i] * zj;
            }
        }
        out
    }

    /// `zᵀ A z`.
    pub fn quad(&self, z: &[T]) -> T {
        self.mul_vec(z).iter().zip(z).map(|(&a, &b)| a * b).sum()
    }

    pub fn scale(&self, a: T) -> Self {
        SymMatrix { n: self.n, data: self.data.iter().map(|&x| x * a).collect() }
    }

    /// `self += a * o`.
    pub fn axpy(&mut self, a: T, o: &Self) {
        for (x, &y) in self.data.iter_mut().zip(&o.data) {
            *x += a * y;
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut m = self.clone();
        m.axpy(-T::one(), o);
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut m = self.clone();
        m.axpy(T::one(), o);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest entrywise asymmetry.
    pub fn asymmetry(&self) -> T {
        let mut a = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                a = a.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        a
    }

    /// Full symmetric eigen-decomposition (Householder tridiagonalisation followed by
    /// implicit QL), ascending eigenvalues.
    pub fn eigh(&self) -> Result<DenseEigen<T>> {
        if !self.is_finite() {
            return Err(Error::Numerical("eigen-decomposition of a non-finite matrix".into()));
        }
        let n = self.n;
        if n == 0 {
            return Ok(DenseEigen { n, values: vec![], vectors: vec![] });
        }
        let mut v = self.data.clone();
        let mut d = vec![T::zero(); n];
        let mut e = vec![T::zero(); n];
        tred2(n, &mut v, &mut d, &mut e);
        tql2(n, &mut v, &mut d, &mut e)?;
        Ok(DenseEigen { n, values: d, vectors: v })
    }

    /// Eigenvalues only, ascending.
    pub fn eigvals(&self) -> Result<Vec<T>> {
        Ok(self.eigh()?.values)
    }

    pub fn min_eig(&self) -> Result<T> {
        Ok(self.eigh()?.min())
    }

    /// Nearest positive-semidefinite matrix in Frobenius norm.
    pub fn psd_part(&self) -> Result<SymMatrix<T>> {
        let e = self.eigh()?;
        Ok(e.reconstruct(|l| if l > T::zero() { l } else { T::zero() }))
    }
}

// Column-major accessor: element (row r, column c).
macro_rules! at {
    ($v:ident, $n:expr, $r:expr, $c:expr) => {
        $v[($c) * $n + ($r)]
    };
}

fn tred2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    for j in 0..n {
        d[j] = at!(v, n, n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at!(v, n, i - 1, j);
                at!(v, n, i, j) = T::zero();
                at!(v, n, j, i) = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                at!(v, n, j, i) = f;
                g = e[j] + at!(v, n, j, j) * f;
                for k in j + 1..i {
                    let vkj = at!(v, n, k, j);
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    at!(v, n, k, j) -= f * e[k] + g * d[k];
                }
                d[j] = at!(v, n, i - 1, j);
                at!(v, n, i, j) = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        at!(v, n, n - 1, i) = at!(v, n, i, i);
        at!(v, n, i, i) = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = at!(v, n, k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += at!(v, n, k, i + 1) * at!(v, n, k, j);
                }
                for k in 0..=i {
                    at!(v, n, k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            at!(v, n, k, i + 1) = T::zero();
        }
    }
    for j in 0..n {
        d[j] = at!(v, n, n - 1, j);
        at!(v, n, n - 1, j) = T::zero();
    }
    at!(v, n, n - 1, n - 1) = T::one();
    e[0] = T::zero();
}

fn tql2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical("QL iteration did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (e[l] + e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    let ci = &mut lo[i * n..];
                    let ci1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = ci1[k];
                        ci1[k] = s * ci[k] + c * hk;
                        ci[k] = c * ci[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    // Selection sort keeps vectors paired with values.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                v.swap(i * n + r, k * n + r);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> SymMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set_sym(i, j, rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for &n in &[1usize, 2, 5, 17, 40] {
            let m = random_sym(n, n as u64);
            let e = m.eigh().unwrap();
            let r = e.reconstruct(|l| l);
            assert!(r.sub(&m).max_abs() < 1e-12 * n as f64, "n={n}");
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = e.vector(a).iter().zip(e.vector(b)).map(|(x, y)| x * y).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn psd_part_is_psd_and_idempotent() {
        let m = random_sym(12, 7);
        let p = m.psd_part().unwrap();
        assert!(p.min_eig().unwrap() > -1e-12);
        assert!(p.psd_part().unwrap().sub(&p).max_abs() < 1e-12);
    }

    #[test]
    fn block_roundtrip() {
        let mut m = SymMatrix::<f64>::zeros(12);
        let b = Mat4::from_row_major(&(0..16).map(|x| x as f64).collect::<Vec<_>>()).unwrap();
        m.set_block4(2, 0, &b);
        assert_eq!(m.block4(2, 0), b);
        assert_eq!(m.block4(0, 2), b.transpose());
    }

    #[test]
    fn rejects_nan() {
        let mut m = SymMatrix::<f64>::identity(3);
        m.set_sym(0, 1, f64::NAN);
        assert!(m.eigh().is_err());
    }
}
