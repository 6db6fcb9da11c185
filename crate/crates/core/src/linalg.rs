//! Small fixed-size vectors and square matrices, generic over scalar and
//! dimension.
//!
//! The simulator only ever needs 2x2 and 3x3 operations, so everything is
//! written against `const D: usize` with stack storage. Matrices are
//! row-major: `m[r][c]`.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::de::Error as _;
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vector<T, const D: usize>(pub [T; D]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix<T, const D: usize>(pub [[T; D]; D]);

// serde lacks blanket impls for const-generic arrays, so vectors encode as
// plain JSON arrays by hand.
impl<T: Serialize, const D: usize> Serialize for Vector<T, D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut tuple = serializer.serialize_tuple(D)?;
        for v in &self.0 {
            tuple.serialize_element(v)?;
        }
        tuple.end()
    }
}

impl<'de, T: Real + Deserialize<'de>, const D: usize> Deserialize<'de> for Vector<T, D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        let values: Vec<T> = Vec::deserialize(deserializer)?;
        if values.len() != D {
            return Err(De::Error::invalid_length(
                values.len(),
                &format!("{D} components").as_str(),
            ));
        }
        let mut out = [T::zero(); D];
        out.copy_from_slice(&values);
        Ok(Vector(out))
    }
}

impl<T: Real, const D: usize> Default for Vector<T, D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real, const D: usize> Vector<T, D> {
    pub fn zero() -> Self {
        Vector([T::zero(); D])
    }

    pub fn splat(v: T) -> Self {
        Vector([v; D])
    }

    pub fn dot(&self, rhs: &Self) -> T {
        let mut acc = T::zero();
        for a in 0..D {
            acc += self.0[a] * rhs.0[a];
        }
        acc
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> T {
        let mut acc = T::zero();
        for a in 0..D {
            acc += self.0[a];
        }
        acc
    }

    /// Outer product `self * rhs^T`.
    pub fn outer(&self, rhs: &Self) -> Matrix<T, D> {
        let mut m = Matrix::zero();
        for r in 0..D {
            for c in 0..D {
                m.0[r][c] = self.0[r] * rhs.0[c];
            }
        }
        m
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = *self;
        for a in 0..D {
            out.0[a] = f(out.0[a]);
        }
        out
    }

    pub fn distance_sq(&self, rhs: &Self) -> T {
        (*self - *rhs).norm_sq()
    }
}

impl<T: Real, const D: usize> Index<usize> for Vector<T, D> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Real, const D: usize> IndexMut<usize> for Vector<T, D> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real, const D: usize> Add for Vector<T, D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for a in 0..D {
            self.0[a] += rhs.0[a];
        }
        self
    }
}

impl<T: Real, const D: usize> AddAssign for Vector<T, D> {
    fn add_assign(&mut self, rhs: Self) {
        for a in 0..D {
            self.0[a] += rhs.0[a];
        }
    }
}

impl<T: Real, const D: usize> Sub for Vector<T, D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for a in 0..D {
            self.0[a] -= rhs.0[a];
        }
        self
    }
}

impl<T: Real, const D: usize> SubAssign for Vector<T, D> {
    fn sub_assign(&mut self, rhs: Self) {
        for a in 0..D {
            self.0[a] -= rhs.0[a];
        }
    }
}

impl<T: Real, const D: usize> Mul<T> for Vector<T, D> {
    type Output = Self;
    fn mul(mut self, s: T) -> Self {
        for a in 0..D {
            self.0[a] *= s;
        }
        self
    }
}

impl<T: Real, const D: usize> Div<T> for Vector<T, D> {
    type Output = Self;
    fn div(mut self, s: T) -> Self {
        for a in 0..D {
            self.0[a] /= s;
        }
        self
    }
}

impl<T: Real, const D: usize> Neg for Vector<T, D> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in 0..D {
            self.0[a] = -self.0[a];
        }
        self
    }
}

impl<T: Real, const D: usize> Default for Matrix<T, D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real, const D: usize> Matrix<T, D> {
    pub fn zero() -> Self {
        Matrix([[T::zero(); D]; D])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for a in 0..D {
            m.0[a][a] = T::one();
        }
        m
    }

    pub fn from_diagonal(d: &[T; D]) -> Self {
        let mut m = Self::zero();
        for a in 0..D {
            m.0[a][a] = d[a];
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for r in 0..D {
            for c in 0..D {
                m.0[c][r] = self.0[r][c];
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        let mut acc = T::zero();
        for a in 0..D {
            acc += self.0[a][a];
        }
        acc
    }

    pub fn col(&self, c: usize) -> Vector<T, D> {
        let mut v = Vector::zero();
        for r in 0..D {
            v.0[r] = self.0[r][c];
        }
        v
    }

    pub fn set_col(&mut self, c: usize, v: &Vector<T, D>) {
        for r in 0..D {
            self.0[r][c] = v.0[r];
        }
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        match D {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            3 => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
            _ => unimplemented!("determinant only defined for D <= 3"),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        let mut acc = T::zero();
        for r in 0..D {
            for c in 0..D {
                acc += self.0[r][c] * self.0[r][c];
            }
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut acc = T::zero();
        for r in 0..D {
            for c in 0..D {
                acc = acc.max(self.0[r][c].abs());
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|row| row.iter().all(|v| v.is_finite()))
    }

    /// Thin SVD `A = U * diag(sigma) * V^T` via one-sided Jacobi, with signs
    /// fixed so that `U` and `V` are proper rotations; the smallest singular
    /// value may then be negative. Singular values come back sorted by
    /// decreasing magnitude.
    pub fn svd(&self) -> Svd<T, D> {
        let mut b = *self;
        let mut v = Matrix::identity();
        let eps = T::epsilon() * T::cast(16.0);
        // One-sided Jacobi: orthogonalize column pairs of B, accumulating V.
        for _sweep in 0..32 {
            let mut off = T::zero();
            for p in 0..D {
                for q in (p + 1)..D {
                    let cp = b.col(p);
                    let cq = b.col(q);
                    let alpha = cp.norm_sq();
                    let beta = cq.norm_sq();
                    let gamma = cp.dot(&cq);
                    off = off.max(gamma.abs());
                    if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                        continue;
                    }
                    let zeta = (beta - alpha) / (T::cast(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for r in 0..D {
                        let bp = b.0[r][p];
                        let bq = b.0[r][q];
                        b.0[r][p] = c * bp - s * bq;
                        b.0[r][q] = s * bp + c * bq;
                        let vp = v.0[r][p];
                        let vq = v.0[r][q];
                        v.0[r][p] = c * vp - s * vq;
                        v.0[r][q] = s * vp + c * vq;
                    }
                }
            }
            if off <= T::epsilon() {
                break;
            }
        }
        let mut u = Matrix::zero();
        let mut sigma = [T::zero(); D];
        for j in 0..D {
            let cj = b.col(j);
            let n = cj.norm();
            sigma[j] = n;
            if n > T::min_positive_value() {
                u.set_col(j, &(cj / n));
            } else {
                // Degenerate column: fall back to the canonical basis vector.
                let mut e = Vector::zero();
                e.0[j] = T::one();
                u.set_col(j, &e);
            }
        }
        // Sort singular values descending, permuting U and V columns in step.
        for i in 0..D {
            let mut best = i;
            for j in (i + 1)..D {
                if sigma[j] > sigma[best] {
                    best = j;
                }
            }
            if best != i {
                sigma.swap(i, best);
                u.swap_cols(i, best);
                v.swap_cols(i, best);
            }
        }
        // Make U and V proper rotations; a reflection moves into sigma[D-1].
        if u.determinant() < T::zero() {
            u.negate_col(D - 1);
            sigma[D - 1] = -sigma[D - 1];
        }
        if v.determinant() < T::zero() {
            v.negate_col(D - 1);
            sigma[D - 1] = -sigma[D - 1];
        }
        Svd { u, sigma, v }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for r in 0..D {
            self.0[r].swap(a, b);
        }
    }

    fn negate_col(&mut self, c: usize) {
        for r in 0..D {
            self.0[r][c] = -self.0[r][c];
        }
    }

    /// Rotation factor of the polar decomposition `A = R S`.
    pub fn polar_rotation(&self) -> Matrix<T, D> {
        let svd = self.svd();
        svd.u * svd.v.transpose()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Svd<T, const D: usize> {
    pub u: Matrix<T, D>,
    pub sigma: [T; D],
    pub v: Matrix<T, D>,
}

impl<T: Real, const D: usize> Svd<T, D> {
    pub fn reconstruct(&self) -> Matrix<T, D> {
        self.u * Matrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

impl<T: Real, const D: usize> Add for Matrix<T, D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for r in 0..D {
            for c in 0..D {
                self.0[r][c] += rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Real, const D: usize> Sub for Matrix<T, D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for r in 0..D {
            for c in 0..D {
                self.0[r][c] -= rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Real, const D: usize> Mul<T> for Matrix<T, D> {
    type Output = Self;
    fn mul(mut self, s: T) -> Self {
        for r in 0..D {
            for c in 0..D {
                self.0[r][c] *= s;
            }
        }
        self
    }
}

impl<T: Real, const D: usize> Mul for Matrix<T, D> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zero();
        for r in 0..D {
            for c in 0..D {
                let mut acc = T::zero();
                for k in 0..D {
                    acc += self.0[r][k] * rhs.0[k][c];
                }
                out.0[r][c] = acc;
            }
        }
        out
    }
}

impl<T: Real, const D: usize> Mul<Vector<T, D>> for Matrix<T, D> {
    type Output = Vector<T, D>;
    fn mul(self, rhs: Vector<T, D>) -> Vector<T, D> {
        let mut out = Vector::zero();
        for r in 0..D {
            let mut acc = T::zero();
            for c in 0..D {
                acc += self.0[r][c] * rhs.0[c];
            }
            out.0[r] = acc;
        }
        out
    }
}
