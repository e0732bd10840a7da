//! Dense real polynomials in ascending coefficient order.
//!
//! Every μ-dependent object of the reduction (m, c, σ, ρ, w, Q, c_new, V_μ)
//! is a `Poly`. Degrees stay small (at most 2N + n), so a dense `Vec` is the
//! right representation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::{Add, Mul, Neg, Sub};

/// Real-coefficient univariate polynomial; `coeffs[k]` multiplies μᵏ.
///
/// The coefficient list is never empty and carries no trailing exact zeros,
/// so `degree()` is deterministic. The zero polynomial is `[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    /// Builds a polynomial from ascending coefficients, trimming exact trailing zeros.
    pub fn new(coeffs: Vec<T>) -> Self {
        Self::with_trim(coeffs, T::zero())
    }

    /// Builds a polynomial, dropping trailing coefficients with `|c| <= eps`.
    pub fn with_trim(mut coeffs: Vec<T>, eps: T) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() <= eps) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        if coeffs.len() == 1 && coeffs[0].abs() <= eps {
            coeffs[0] = T::zero();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly {
            coeffs: vec![T::zero()],
        }
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    /// μᵏ.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = T::one();
        Poly { coeffs }
    }

    /// μ − a.
    pub fn linear_factor(a: T) -> Self {
        Self::new(vec![-a, T::one()])
    }

    /// ∏ (μ − rᵢ).
    pub fn from_roots(roots: &[T]) -> Self {
        roots
            .iter()
            .fold(Self::one(), |acc, &r| &acc * &Self::linear_factor(r))
    }

    /// Monic polynomial μᴺ + t₁μᴺ⁻¹ + ⋯ + t_N from its non-leading coefficients
    /// in descending order (the companion-coordinate convention for w).
    pub fn monic_from_tail(tail: &[T]) -> Self {
        let n = tail.len();
        let mut coeffs = vec![T::zero(); n + 1];
        coeffs[n] = T::one();
        for (i, &t) in tail.iter().enumerate() {
            coeffs[n - 1 - i] = t;
        }
        Poly { coeffs }
    }

    /// Inverse of [`Poly::monic_from_tail`] for a polynomial of degree `deg`:
    /// returns the coefficients of μ^{deg−1}, …, μ⁰.
    pub fn tail(&self, deg: usize) -> Vec<T> {
        (1..=deg).map(|i| self.coeff(deg - i)).collect()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Coefficient of μᵏ (zero beyond the stored degree).
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == T::zero()
    }

    pub fn leading(&self) -> T {
        *self.coeffs.last().expect("non-empty coefficients")
    }

    /// Whether the leading coefficient is within `tol` of one.
    pub fn is_monic(&self, tol: T) -> bool {
        (self.leading() - T::one()).abs() <= tol
    }

    pub fn max_abs_coeff(&self) -> T {
        crate::scalar::max_abs(&self.coeffs)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * T::from_usize(k).unwrap())
                .collect(),
        )
    }

    /// Re-trims trailing coefficients below `eps`.
    pub fn trimmed(&self, eps: T) -> Self {
        Self::with_trim(self.coeffs.clone(), eps)
    }

    /// Euclidean division: `self = divisor·q + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Self) -> Result<(Self, Self)> {
        if divisor.is_zero() {
            return Err(Error::DivisionByZeroPoly);
        }
        let db = divisor.degree();
        if self.degree() < db || self.is_zero() {
            return Ok((Self::zero(), self.clone()));
        }
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![T::zero(); self.degree() - db + 1];
        for k in (0..quot.len()).rev() {
            let f = rem[k + db] / lead;
            quot[k] = f;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= f * d;
            }
            rem[k + db] = T::zero();
        }
        rem.truncate(db.max(1));
        Ok((Self::new(quot), Self::new(rem)))
    }

    /// Quotient (p(μ) − p(a)) / (μ − a), which is exact.
    pub fn divided_difference(&self, a: T) -> Self {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        // synthetic division by (μ − a); the discarded remainder is p(a)
        let d = self.degree();
        let mut out = vec![T::zero(); d];
        let mut acc = T::zero();
        for k in (1..=d).rev() {
            acc = acc * a + self.coeffs[k];
            out[k - 1] = acc;
        }
        Self::new(out)
    }

    /// Unique interpolant of degree < points.len() through the given (node, value) pairs.
    pub fn lagrange(points: &[(T, T)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("no interpolation nodes".into()));
        }
        let scale = points.iter().fold(T::zero(), |a, &(x, _)| a.max(x.abs()));
        let tol = T::lit(1e-12) * scale.max(T::min_positive_value());
        for (i, &(xi, _)) in points.iter().enumerate() {
            for &(xj, _) in &points[i + 1..] {
                if (xi - xj).abs() <= tol {
                    return Err(Error::DuplicateNode(xi.to_f64_lossy(), xj.to_f64_lossy()));
                }
            }
        }
        let mut acc = Self::zero();
        for (i, &(xi, yi)) in points.iter().enumerate() {
            let mut basis = Self::one();
            let mut denom = T::one();
            for (j, &(xj, _)) in points.iter().enumerate() {
                if i != j {
                    basis = &basis * &Self::linear_factor(xj);
                    denom *= xi - xj;
                }
            }
            acc = &acc + &basis.scale(yi / denom);
        }
        Ok(acc)
    }
}

impl<T: Scalar> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: Self) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: Self) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: Self) -> Poly<T> {
        let mut out = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scale(-T::one())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl<T: Scalar> $tr for Poly<T> {
            type Output = Poly<T>;
            fn $m(self, rhs: Self) -> Poly<T> {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl<T: Scalar + Serialize> Serialize for Poly<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coeffs.serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Poly<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<T>::deserialize(d)?;
        Ok(Poly::new(v))
    }
}
