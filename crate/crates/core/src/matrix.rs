//! Small dense symmetric-matrix algebra.
//!
//! Dimensions are tiny (d <= 16), so everything is stored densely and the
//! spectral decomposition is a cyclic Jacobi iteration with a fixed sweep
//! order, which keeps results reproducible bit-for-bit.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_JACOBI_SWEEPS: usize = 64;

/// A `d x d` real symmetric matrix.
#[derive(Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

/// A general `d x d` real matrix (row-major). Used for orthogonal bases
/// and mutual overlaps, which need not be symmetric.
#[derive(Clone, PartialEq)]
pub struct Square<T> {
    dim: usize,
    data: Vec<T>,
}

/// Spectral decomposition `M = V diag(values) V^T`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    /// Eigenvectors stored as columns.
    pub vectors: Square<T>,
}

/// A symmetric matrix certified positive semidefinite within tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMatrix<T> {
    base: SymMatrix<T>,
    min_eigenvalue: T,
}

impl<T: fmt::Debug> fmt::Debug for SymMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

impl<T: fmt::Debug> fmt::Debug for Square<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![T::one(); dim])
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dim: 1,
            data: vec![value],
        }
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix from its upper triangle: `f(u, v)` is queried for `u <= v`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for u in 0..dim {
            for v in u..dim {
                let x = f(u, v);
                m.data[u * dim + v] = x;
                m.data[v * dim + u] = x;
            }
        }
        m
    }

    /// Builds a matrix from rows. Entries must agree with their transpose up
    /// to a few ulps; the stored matrix is the exact average.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        let tol = T::epsilon() * T::lit(64.0);
        for u in 0..dim {
            for v in (u + 1)..dim {
                let (a, b) = (rows[u][v], rows[v][u]);
                let scale = T::one() + a.abs().max(b.abs());
                if (a - b).abs() > tol * scale || a.is_nan() || b.is_nan() {
                    return Err(Error::NotSymmetric { row: u, col: v });
                }
            }
        }
        Ok(Self::from_fn(dim, |u, v| {
            if u == v {
                rows[u][u]
            } else {
                (rows[u][v] + rows[v][u]) / T::lit(2.0)
            }
        }))
    }

    /// Symmetric part of a general square matrix.
    pub fn symmetric_part(m: &Square<T>) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(m.dim, |u, v| (m.get(u, v) + m.get(v, u)) * half)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[u * self.dim + v]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `sum_{u,v} A[u][v] B[u][v]`.
    pub fn frobenius_inner(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &a| acc + a * a)
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).fold(T::zero(), |acc, i| acc + self.get(i, i))
    }

    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).fold(T::zero(), |a, (&m, &v)| a + m * v))
            .collect()
    }

    /// `<M x, x>`.
    pub fn quad_form(&self, x: &[T]) -> T {
        self.mat_vec(x)
            .iter()
            .zip(x)
            .fold(T::zero(), |a, (&mx, &v)| a + mx * v)
    }

    /// Cyclic Jacobi eigen-decomposition.
    pub fn eigen(&self) -> Eigen<T> {
        jacobi_eigen(self)
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.eigen().values
    }

    pub fn min_eigenvalue(&self) -> T {
        if self.dim == 1 {
            return self.data[0];
        }
        self.eigenvalues()[0]
    }

    /// Operator (spectral) norm, `max |eigenvalue|`.
    pub fn operator_norm(&self) -> T {
        if self.dim == 1 {
            return self.data[0].abs();
        }
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[ev.len() - 1].abs())
    }

    /// Entrywise power `M^{(.p)}`. Negative entries only admit integer powers.
    pub fn hadamard_power(&self, p: T) -> Result<Self> {
        let integral = p.fract() == T::zero();
        if !integral {
            if let Some(&bad) = self.data.iter().find(|&&x| x < T::zero()) {
                return Err(Error::NegativeEntry {
                    value: bad.to_f64_lossy(),
                    power: p.to_f64_lossy(),
                });
            }
        }
        Ok(self.map(|x| {
            if integral {
                x.powi(p.to_i32().unwrap_or(0))
            } else {
                x.powf(p)
            }
        }))
    }

    /// `f(M) = V diag(f(lambda)) V^T`.
    pub fn spectral_map(&self, f: impl Fn(T) -> T) -> Self {
        let e = self.eigen();
        let d = self.dim;
        let fl: Vec<T> = e.values.iter().map(|&l| f(l)).collect();
        Self::from_fn(d, |u, v| {
            (0..d).fold(T::zero(), |acc, k| {
                acc + e.vectors.get(u, k) * fl[k] * e.vectors.get(v, k)
            })
        })
    }

    /// Inverse of a positive-definite matrix.
    pub fn inverse_pd(&self) -> Result<Self> {
        let lmin = self.min_eigenvalue();
        if !(lmin > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lmin.to_f64_lossy(),
            });
        }
        if self.dim == 1 {
            return Ok(Self::scalar(T::one() / self.data[0]));
        }
        Ok(self.spectral_map(|l| T::one() / l))
    }

    /// `log det M` of a positive-definite matrix.
    pub fn log_det_pd(&self) -> Result<T> {
        let ev = if self.dim == 1 {
            vec![self.data[0]]
        } else {
            self.eigenvalues()
        };
        if !(ev[0] > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: ev[0].to_f64_lossy(),
            });
        }
        Ok(ev.iter().fold(T::zero(), |a, &l| a + l.ln()))
    }

    pub fn det(&self) -> T {
        if self.dim == 1 {
            return self.data[0];
        }
        self.eigenvalues().iter().fold(T::one(), |a, &l| a * l)
    }

    /// `O M O^T`.
    pub fn conjugate(&self, o: &Square<T>) -> Result<Self> {
        if o.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: o.dim,
            });
        }
        let om = o.mul(&Square::from_sym(self));
        Ok(Self::symmetric_part(&om.mul(&o.transpose())))
    }

    pub fn to_square(&self) -> Square<T> {
        Square::from_sym(self)
    }

    pub fn cast<S: Scalar>(&self) -> SymMatrix<S> {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&x| S::lit(x.to_f64_lossy())).collect(),
        }
    }
}

impl<'a, T: Scalar> Add for &'a SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn add(self, rhs: Self) -> SymMatrix<T> {
        self.try_add(rhs).expect("dimension mismatch")
    }
}

impl<'a, T: Scalar> Sub for &'a SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn sub(self, rhs: Self) -> SymMatrix<T> {
        self.try_sub(rhs).expect("dimension mismatch")
    }
}

impl<'a, T: Scalar> Mul<T> for &'a SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn mul(self, rhs: T) -> SymMatrix<T> {
        self.scale(rhs)
    }
}

impl<'a, T: Scalar> Neg for &'a SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn neg(self) -> SymMatrix<T> {
        self.map(|x| -x)
    }
}

impl<T: Scalar> Square<T> {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::one();
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for u in 0..dim {
            for v in 0..dim {
                data.push(f(u, v));
            }
        }
        Self { dim, data }
    }

    pub fn from_sym(m: &SymMatrix<T>) -> Self {
        Self {
            dim: m.dim,
            data: m.data.clone(),
        }
    }

    /// Planar rotation by `angle` (2 x 2).
    pub fn rotation(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            dim: 2,
            data: vec![c, -s, s, c],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[u * self.dim + v]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, k: usize) -> Vec<T> {
        (0..self.dim).map(|u| self.get(u, k)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |u, v| self.get(v, u))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |u, v| {
            (0..d).fold(T::zero(), |a, k| a + self.get(u, k) * other.get(k, v))
        })
    }

    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).fold(T::zero(), |a, (&m, &v)| a + m * v))
            .collect()
    }

    /// `max |O O^T - I|` below `tol`.
    pub fn is_orthogonal(&self, tol: T) -> bool {
        let p = self.mul(&self.transpose());
        (0..self.dim).all(|u| {
            (0..self.dim).all(|v| {
                let target = if u == v { T::one() } else { T::zero() };
                (p.get(u, v) - target).abs() <= tol
            })
        })
    }
}

impl<T: Scalar> PsdMatrix<T> {
    /// Certifies `m` as PSD: smallest eigenvalue `>= -tol (1 + |m|_F)`.
    pub fn new(m: SymMatrix<T>) -> Result<Self> {
        let lmin = m.min_eigenvalue();
        if lmin < -psd_threshold(&m) || lmin.is_nan() {
            return Err(Error::NotPsd {
                min_eigenvalue: lmin.to_f64_lossy(),
            });
        }
        Ok(Self {
            base: m,
            min_eigenvalue: lmin,
        })
    }

    pub fn min_eigenvalue(&self) -> T {
        self.min_eigenvalue
    }

    pub fn matrix(&self) -> &SymMatrix<T> {
        &self.base
    }

    pub fn into_inner(self) -> SymMatrix<T> {
        self.base
    }
}

impl<T> std::ops::Deref for PsdMatrix<T> {
    type Target = SymMatrix<T>;
    fn deref(&self) -> &SymMatrix<T> {
        &self.base
    }
}

fn psd_threshold<T: Scalar>(m: &SymMatrix<T>) -> T {
    T::psd_tol() * (T::one() + m.frobenius_norm())
}

/// `A <= B` in the Loewner order: `eigmin(B - A) >= -tol (1 + |B - A|_F)`.
pub fn loewner_leq<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>, tol: T) -> Result<bool> {
    let diff = b.try_sub(a)?;
    Ok(diff.min_eigenvalue() >= -tol * (T::one() + diff.frobenius_norm()))
}

/// Spectral square root of a PSD matrix. Eigenvalues within tolerance of
/// zero are clipped before taking roots.
pub fn sym_sqrt<T: Scalar>(m: &PsdMatrix<T>) -> SymMatrix<T> {
    if m.dim() == 1 {
        return SymMatrix::scalar(m.get(0, 0).max(T::zero()).sqrt());
    }
    m.spectral_map(|l| l.max(T::zero()).sqrt())
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd<T: Scalar>(m: &SymMatrix<T>) -> PsdMatrix<T> {
    let projected = if m.dim() == 1 {
        SymMatrix::scalar(m.get(0, 0).max(T::zero()))
    } else {
        m.spectral_map(|l| l.max(T::zero()))
    };
    let lmin = projected.min_eigenvalue();
    PsdMatrix {
        base: projected,
        min_eigenvalue: lmin.max(T::zero()),
    }
}

fn jacobi_eigen<T: Scalar>(m: &SymMatrix<T>) -> Eigen<T> {
    let d = m.dim;
    let mut a = m.data.clone();
    let mut v = Square::identity(d).data;
    let scale = m.frobenius_norm_sq();
    let eps2 = T::epsilon() * T::epsilon();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for p in 0..d {
            for q in (p + 1)..d {
                off = off + a[p * d + q] * a[p * d + q];
            }
        }
        if off == T::zero() || off <= eps2 * eps2 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = T::zero();
                a[q * d + p] = T::zero();
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        a[i * d + i]
            .partial_cmp(&a[j * d + j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let vectors = Square::from_fn(d, |u, k| v[u * d + order[k]]);
    Eigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix<f64> {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    #[test]
    fn frobenius_examples() {
        let i3 = SymMatrix::<f64>::identity(3);
        assert_eq!(i3.frobenius_inner(&i3).unwrap(), 3.0);
        let a = m2(1.0, 2.0, 3.0);
        assert_eq!(a.frobenius_inner(&SymMatrix::zeros(2)).unwrap(), 0.0);
        assert_eq!(a.frobenius_inner(&m2(0.0, 1.0, 0.0)).unwrap(), 4.0);
        assert!(matches!(
            a.frobenius_inner(&i3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn loewner_examples() {
        let i = SymMatrix::<f64>::identity(2);
        let two_i = i.scale(2.0);
        assert!(loewner_leq(&i, &two_i, 1e-10).unwrap());
        assert!(!loewner_leq(&two_i, &i, 1e-10).unwrap());
        assert!(loewner_leq(&SymMatrix::from_diag(&[1.0, 0.0]), &i, 1e-10).unwrap());
    }

    #[test]
    fn hadamard_examples() {
        let m = SymMatrix::scalar(4.0);
        assert_eq!(m.hadamard_power(0.5).unwrap().get(0, 0), 2.0);
        let a = m2(1.0, 2.0, 3.0);
        assert_eq!(a.hadamard_power(1.0).unwrap(), a);
        assert_eq!(a.hadamard_power(2.0).unwrap(), m2(1.0, 4.0, 9.0));
        assert!(m2(1.0, -0.5, 1.0).hadamard_power(0.5).is_err());
        assert_eq!(
            m2(1.0, -0.5, 1.0).hadamard_power(2.0).unwrap(),
            m2(1.0, 0.25, 1.0)
        );
    }

    #[test]
    fn sqrt_examples() {
        let i = PsdMatrix::new(SymMatrix::<f64>::identity(2)).unwrap();
        let s = sym_sqrt(&i);
        assert!(s.try_sub(&SymMatrix::identity(2)).unwrap().frobenius_norm() < 1e-14);

        let d = PsdMatrix::new(SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
        let s = sym_sqrt(&d);
        assert_abs_diff_eq!(s.get(0, 0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.get(1, 1), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.get(0, 1), 0.0, epsilon = 1e-14);

        // [[2,1],[1,2]] = V diag(1,3) V^T with V the 45-degree rotation, so the
        // root is ((sqrt3+1)/2, (sqrt3-1)/2; ...).
        let m = m2(2.0, 1.0, 2.0);
        let s = sym_sqrt(&PsdMatrix::new(m.clone()).unwrap());
        let r3 = 3f64.sqrt();
        assert_abs_diff_eq!(s.get(0, 0), (r3 + 1.0) / 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.get(0, 1), (r3 - 1.0) / 2.0, epsilon = 1e-13);
        let sq = s.to_square().mul(&s.to_square());
        assert!(SymMatrix::symmetric_part(&sq).try_sub(&m).unwrap().frobenius_norm() < 1e-13);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        assert!(matches!(
            PsdMatrix::new(m2(1.0, 2.0, 1.0)),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let i = SymMatrix::<f64>::identity(2);
        assert!(project_psd(&i).try_sub(&i).unwrap().frobenius_norm() < 1e-14);
        assert_eq!(project_psd(&SymMatrix::scalar(-1.0)).get(0, 0), 0.0);
        let p = project_psd(&m2(0.0, 1.0, 0.0));
        for (u, v) in [(0, 0), (0, 1), (1, 1)] {
            assert_abs_diff_eq!(p.get(u, v), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn inverse_and_det() {
        let m = m2(2.0, 1.0, 2.0);
        assert_abs_diff_eq!(m.det(), 3.0, epsilon = 1e-13);
        let inv = m.inverse_pd().unwrap();
        assert_abs_diff_eq!(inv.get(0, 0), 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(inv.get(0, 1), -1.0 / 3.0, epsilon = 1e-13);
        assert!(m2(1.0, 2.0, 1.0).inverse_pd().is_err());
    }

    #[test]
    fn f32_path_works() {
        let m = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = m.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-6 && (ev[1] - 3.0).abs() < 1e-6);
    }

    fn sym_strategy(d: usize) -> impl Strategy<Value = SymMatrix<f64>> {
        prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
            SymMatrix::from_fn(d, |u, w| v[u * d + w])
        })
    }

    fn psd_strategy() -> impl Strategy<Value = SymMatrix<f64>> {
        (1usize..=6).prop_flat_map(|d| {
            prop::collection::vec(-1.5..1.5f64, d * d).prop_map(move |g| {
                let gm = Square::from_fn(d, |u, v| g[u * d + v]);
                SymMatrix::symmetric_part(&gm.mul(&gm.transpose()))
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn frobenius_bilinear_symmetric(a in sym_strategy(3), b in sym_strategy(3), c in sym_strategy(3), s in -3.0..3.0f64) {
            let ab = a.frobenius_inner(&b).unwrap();
            prop_assert!((ab - b.frobenius_inner(&a).unwrap()).abs() < 1e-14);
            let lhs = a.scale(s).try_add(&c).unwrap().frobenius_inner(&b).unwrap();
            let rhs = s * ab + c.frobenius_inner(&b).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn sqrt_reconstructs(m in psd_strategy()) {
            let p = PsdMatrix::new(m.clone()).unwrap();
            let s = sym_sqrt(&p).to_square();
            let sq = SymMatrix::symmetric_part(&s.mul(&s));
            let resid = sq.try_sub(&m).unwrap().frobenius_norm();
            prop_assert!(resid <= 1e-10 * (1.0 + m.frobenius_norm()), "residual {resid}");
        }

        #[test]
        fn projection_idempotent(m in sym_strategy(4)) {
            let p = project_psd(&m);
            let pp = project_psd(p.matrix());
            prop_assert!(pp.try_sub(&p).unwrap().frobenius_norm() < 1e-12);
            prop_assert!(PsdMatrix::new(p.matrix().clone()).is_ok());
        }

        #[test]
        fn loewner_partial_order(a in psd_strategy()) {
            let d = a.dim();
            let b = a.try_add(&SymMatrix::identity(d).scale(0.1)).unwrap();
            let c = b.try_add(&a).unwrap();
            prop_assert!(loewner_leq(&a, &a, 1e-10).unwrap());
            prop_assert!(loewner_leq(&a, &b, 1e-10).unwrap());
            prop_assert!(!loewner_leq(&b, &a, 1e-10).unwrap());
            prop_assert!(loewner_leq(&b, &c, 1e-10).unwrap());
            prop_assert!(loewner_leq(&a, &c, 1e-10).unwrap());
        }

        #[test]
        fn eigen_reconstructs(m in sym_strategy(5)) {
            let back = m.spectral_map(|l| l);
            prop_assert!(back.try_sub(&m).unwrap().frobenius_norm() < 1e-12);
        }
    }
}
