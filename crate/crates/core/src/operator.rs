//! Companion-form operators L(u) and M(w), the vector field ζ, and the
//! operator pencil M_λ (including λ = ∞).

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::Poly;
use crate::scalar::Scalar;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Spectral parameter λ ∈ ℝ ∪ {∞}.
///
/// Serialized as a number, or as the string `"inf"` for infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda<T> {
    Finite(T),
    Infinity,
}

impl<T: Scalar> Lambda<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Lambda::Infinity)
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            Lambda::Finite(l) => Some(l),
            Lambda::Infinity => None,
        }
    }
}

impl<T: Scalar> Serialize for Lambda<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Finite(l) => s.serialize_f64(l.to_f64_lossy()),
            Lambda::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Lambda<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Lambda::Finite(T::lit(x))),
            Repr::Int(x) => Ok(Lambda::Finite(T::lit(x as f64))),
            Repr::Str(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(Lambda::Infinity),
                other => other
                    .parse::<f64>()
                    .map(|x| Lambda::Finite(T::lit(x)))
                    .map_err(|_| de::Error::custom(format!("invalid lambda `{s}`"))),
            },
        }
    }
}

/// Sign convention for the reported u-coordinates.
///
/// Internally the u-data are the non-leading coefficients s₁..s_n of
/// σ(μ) = μⁿ + s₁μⁿ⁻¹ + ⋯ + s_n. `FirstCompanion` reports uᵢ = −sᵢ and
/// L(u) has +uᵢ in its first column; `KbForm` reports uᵢ = sᵢ and L(u) has
/// −uᵢ in its first column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    #[default]
    FirstCompanion,
    KbForm,
}

impl Chart {
    /// Converts σ coefficients s₁..s_n to reported u-coordinates.
    pub fn u_from_sigma<T: Scalar>(self, s: &[T]) -> Vec<T> {
        match self {
            Chart::FirstCompanion => s.iter().map(|&x| -x).collect(),
            Chart::KbForm => s.to_vec(),
        }
    }

    /// Inverse of [`Chart::u_from_sigma`] (both maps are involutions up to sign).
    pub fn sigma_from_u<T: Scalar>(self, u: &[T]) -> Vec<T> {
        self.u_from_sigma(u)
    }

    pub fn companion_sign(self) -> CompanionSign {
        match self {
            Chart::FirstCompanion => CompanionSign::PlusU,
            Chart::KbForm => CompanionSign::MinusW,
        }
    }
}

/// A BKM system instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BkmSpec<T> {
    pub n: usize,
    pub m: Poly<T>,
    pub lambda: Lambda<T>,
    #[serde(default)]
    pub chart: Chart,
}

impl<T: Scalar> BkmSpec<T> {
    pub fn new(n: usize, m: Poly<T>, lambda: Lambda<T>, chart: Chart) -> Result<Self> {
        let spec = BkmSpec {
            n,
            m,
            lambda,
            chart,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("bkm.n", "component count must be positive"));
        }
        if self.m.is_zero() {
            return Err(Error::config("bkm.m", "m must not be the zero polynomial"));
        }
        if self.m.degree() > self.n {
            return Err(Error::config(
                "bkm.m",
                format!("deg m = {} exceeds n = {}", self.m.degree(), self.n),
            ));
        }
        if let Lambda::Finite(l) = self.lambda {
            if !l.is_finite() {
                return Err(Error::config("bkm.lambda", "lambda must be finite or \"inf\""));
            }
        }
        Ok(())
    }

    /// Coefficient m_n (zero when deg m < n).
    pub fn m_top(&self) -> T {
        self.m.coeff(self.n)
    }

    /// L(u) in the system's chart.
    pub fn l_matrix(&self, u: &[T]) -> Matrix<T> {
        CompanionMatrix::new(u.to_vec(), self.chart.companion_sign()).to_dense()
    }

    /// σ(μ, u) = det(μ Id − L(u)).
    pub fn sigma(&self, u: &[T]) -> Poly<T> {
        Poly::monic_from_tail(&self.chart.sigma_from_u(u))
    }

    /// tr L(u) = −s₁ in every chart.
    pub fn trace_l(&self, u: &[T]) -> T {
        -self.chart.sigma_from_u(u)[0]
    }

    pub fn zeta(&self, u: &[T]) -> Vec<T> {
        zeta_in_chart(u, &self.m, self.chart)
    }
}

/// Which sign the free first column carries in the dense realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompanionSign {
    /// Entries +uᵢ: characteristic polynomial μⁿ − u₁μⁿ⁻¹ − ⋯ − u_n.
    PlusU,
    /// Entries −wᵢ: characteristic polynomial μᴺ + w₁μᴺ⁻¹ + ⋯ + w_N.
    MinusW,
}

/// Companion matrix: ones on the superdiagonal, signed first column.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix<T> {
    pub first_column: Vec<T>,
    pub sign: CompanionSign,
}

impl<T: Scalar> CompanionMatrix<T> {
    pub fn new(first_column: Vec<T>, sign: CompanionSign) -> Self {
        assert!(!first_column.is_empty(), "companion matrix of size 0");
        CompanionMatrix { first_column, sign }
    }

    /// M(w) in the `MinusW` form.
    pub fn m_of_w(w: &[T]) -> Self {
        Self::new(w.to_vec(), CompanionSign::MinusW)
    }

    pub fn size(&self) -> usize {
        self.first_column.len()
    }

    fn signed(&self, i: usize) -> T {
        match self.sign {
            CompanionSign::PlusU => self.first_column[i],
            CompanionSign::MinusW => -self.first_column[i],
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.size();
        Matrix::from_fn(n, n, |i, j| {
            if j == 0 {
                self.signed(i)
            } else if j == i + 1 {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// det(μ Id − C), read off the first column.
    pub fn char_poly(&self) -> Poly<T> {
        let tail: Vec<T> = (0..self.size()).map(|i| -self.signed(i)).collect();
        Poly::monic_from_tail(&tail)
    }

    /// C·y using the sparse structure.
    pub fn apply(&self, y: &[T]) -> Vec<T> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let next = if i + 1 < n { y[i + 1] } else { T::zero() };
                self.signed(i) * y[0] + next
            })
            .collect()
    }
}

/// ζ in the first-companion chart: ζᵢ = −(m_n uᵢ + m_{n−i}).
pub fn zeta<T: Scalar>(u: &[T], m: &Poly<T>) -> Vec<T> {
    zeta_in_chart(u, m, Chart::FirstCompanion)
}

/// ζ expressed in the coordinates of `chart`; it satisfies
/// ζ(σ(μ)) = m(μ) − m_n σ(μ) in every chart.
pub fn zeta_in_chart<T: Scalar>(u: &[T], m: &Poly<T>, chart: Chart) -> Vec<T> {
    let n = u.len();
    let mn = m.coeff(n);
    (1..=n)
        .map(|i| {
            let lower = m.coeff(n - i);
            match chart {
                Chart::FirstCompanion => -(mn * u[i - 1] + lower),
                Chart::KbForm => lower - mn * u[i - 1],
            }
        })
        .collect()
}

/// f(A) by Horner's scheme.
pub fn matrix_poly<T: Scalar>(f: &Poly<T>, a: &Matrix<T>) -> Matrix<T> {
    let n = a.rows();
    f.coeffs()
        .iter()
        .rev()
        .fold(Matrix::zeros(n, n), |acc, &c| a.matmul(&acc).add_diag(c))
}

/// Horner layers D⁽⁰⁾ = Id, D⁽ᵏ⁾ = M D⁽ᵏ⁻¹⁾ + w_k Id for k = 0..N−1.
///
/// They are the coefficient matrices of the pencil:
/// M_μ = −Σ_b μᵇ D⁽ᴺ⁻¹⁻ᵇ⁾ and M_∞ = D⁽¹⁾.
pub fn horner_layers<T: Scalar>(w: &[T]) -> Vec<Matrix<T>> {
    let nn = w.len();
    let m = CompanionMatrix::m_of_w(w).to_dense();
    let mut layers = Vec::with_capacity(nn);
    let mut d = Matrix::identity(nn);
    layers.push(d.clone());
    for &wk in w.iter().take(nn.saturating_sub(1)) {
        d = m.matmul(&d).add_diag(wk);
        layers.push(d.clone());
    }
    layers
}

/// M_λ = det(λ Id − M)(M − λ Id)⁻¹ = −d(M), with d(μ) = (w(μ) − w(λ))/(μ − λ).
pub fn m_lambda<T: Scalar>(w: &[T], lambda: T) -> Matrix<T> {
    let d = Poly::monic_from_tail(w).divided_difference(lambda);
    matrix_poly(&d, &CompanionMatrix::m_of_w(w).to_dense()).scale(-T::one())
}

/// M_∞ = M − tr M · Id = M + w₁ Id.
pub fn m_infinity<T: Scalar>(w: &[T]) -> Matrix<T> {
    CompanionMatrix::m_of_w(w).to_dense().add_diag(w[0])
}

/// The pencil at either kind of λ.
pub fn m_pencil<T: Scalar>(w: &[T], lambda: Lambda<T>) -> Matrix<T> {
    match lambda {
        Lambda::Finite(l) => m_lambda(w, l),
        Lambda::Infinity => m_infinity(w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn char_poly_examples() {
        let m = CompanionMatrix::new(vec![3.0, -2.0], CompanionSign::MinusW);
        assert_eq!(m.char_poly(), Poly::new(vec![-2.0, 3.0, 1.0]));
        let l = CompanionMatrix::new(vec![5.0], CompanionSign::PlusU);
        assert_eq!(l.char_poly(), Poly::new(vec![-5.0, 1.0]));
        let z = CompanionMatrix::new(vec![0.0; 4], CompanionSign::MinusW);
        assert_eq!(z.char_poly(), Poly::monomial(4));
    }

    #[test]
    fn dense_layout() {
        let m = CompanionMatrix::m_of_w(&[1.0, 2.0, 3.0]).to_dense();
        let expect = Matrix::from_rows(&[
            vec![-1.0, 1.0, 0.0],
            vec![-2.0, 0.0, 1.0],
            vec![-3.0, 0.0, 0.0],
        ]);
        assert_eq!(m, expect);
        let cm = CompanionMatrix::m_of_w(&[1.0, 2.0, 3.0]);
        assert_eq!(cm.apply(&[1.0, 2.0, 3.0]), m.mul_vec(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn zeta_examples() {
        let m0 = Poly::constant(1.5);
        assert_eq!(zeta(&[7.0], &m0), vec![-1.5]);
        let one = Poly::constant(1.0);
        assert_eq!(zeta(&[0.3, 0.4], &one), vec![0.0, -1.0]);
        assert_eq!(zeta_in_chart(&[0.3, 0.4], &one, Chart::KbForm), vec![0.0, 1.0]);
        let cube = Poly::monomial(3);
        assert_eq!(zeta(&[1.0, 2.0, 3.0], &cube), vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn m_lambda_examples() {
        assert_eq!(m_lambda(&[0.7], 2.0), Matrix::from_rows(&[vec![-1.0]]));
        let w = [0.0, -1.0];
        let m = CompanionMatrix::m_of_w(&w).to_dense();
        assert!(close(&m_lambda(&w, 1.0), &m.add_diag(1.0).scale(-1.0), 1e-15));
        // λ = 1 is an eigenvalue: result is finite and singular
        let ml = m_lambda(&w, 1.0);
        let det = ml[(0, 0)] * ml[(1, 1)] - ml[(0, 1)] * ml[(1, 0)];
        assert!(det.abs() < 1e-15);
    }

    #[test]
    fn m_infinity_examples() {
        let mi = m_infinity(&[0.4, 0.9]);
        assert_eq!(mi, Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.9, 0.4]]));
        assert_eq!(m_infinity(&[3.0]), Matrix::zeros(1, 1));
        let m = CompanionMatrix::m_of_w(&[1.0, 0.0, 0.0]).to_dense();
        assert_eq!(m_infinity(&[1.0, 0.0, 0.0]), m.add_diag(1.0));
    }

    #[test]
    fn horner_layers_assemble_pencil() {
        let w = [0.3, -0.8, 0.5, 0.1];
        let layers = horner_layers(&w);
        assert_eq!(layers.len(), 4);
        let lam: f64 = 0.77;
        let mut assembled = Matrix::zeros(4, 4);
        for b in 0..4 {
            assembled = assembled.add(&layers[3 - b].scale(-lam.powi(b as i32)));
        }
        assert!(close(&assembled, &m_lambda(&w, lam), 1e-13));
        assert!(close(&layers[1], &m_infinity(&w), 1e-15));
    }

    #[test]
    fn pencil_inverts_shifted_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let nn = rng.gen_range(1..=6);
            let w: Vec<f64> = (0..nn).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lam: f64 = rng.gen_range(-3.0..3.0);
            let m = CompanionMatrix::m_of_w(&w).to_dense();
            let eig = DMatrix::from_row_slice(nn, nn, m.as_slice()).complex_eigenvalues();
            if eig.iter().any(|z| (z - nalgebra::Complex::new(lam, 0.0)).norm() < 1e-6) {
                continue;
            }
            let wl = Poly::monic_from_tail(&w).eval(lam);
            let prod = m.add_diag(-lam).matmul(&m_lambda(&w, lam));
            let target = Matrix::identity(nn).scale(wl);
            assert!(close(&prod, &target, 1e-9 * (1.0 + wl.abs())));
            checked += 1;
        }
    }

    #[test]
    fn char_poly_vanishes_at_dense_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let nn = rng.gen_range(1..=6);
            let w: Vec<f64> = (0..nn).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let cm = CompanionMatrix::m_of_w(&w);
            let p = cm.char_poly();
            let dense = cm.to_dense();
            for z in DMatrix::from_row_slice(nn, nn, dense.as_slice()).complex_eigenvalues().iter() {
                let v = p
                    .coeffs()
                    .iter()
                    .rev()
                    .fold(nalgebra::Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
                assert!(v.norm() <= 1e-8, "|w(y)| = {}", v.norm());
            }
        }
    }

    proptest! {
        #[test]
        fn zeta_is_lie_derivative_of_sigma(
            u in prop::collection::vec(-1.5f64..1.5, 1..5),
            mc in prop::collection::vec(-1.0f64..1.0, 1..6),
            mu in -2.0f64..2.0,
            kb in any::<bool>(),
        ) {
            let n = u.len();
            let m = Poly::new(mc.into_iter().take(n + 1).collect());
            prop_assume!(!m.is_zero());
            let chart = if kb { Chart::KbForm } else { Chart::FirstCompanion };
            let spec = BkmSpec::new(n, m.clone(), Lambda::Infinity, chart).unwrap();
            let z = spec.zeta(&u);
            let h = 1e-6;
            let up: Vec<f64> = u.iter().zip(&z).map(|(a, b)| a + h * b).collect();
            let um: Vec<f64> = u.iter().zip(&z).map(|(a, b)| a - h * b).collect();
            let deriv = (spec.sigma(&up).eval(mu) - spec.sigma(&um).eval(mu)) / (2.0 * h);
            let expect = m.eval(mu) - spec.m_top() * spec.sigma(&u).eval(mu);
            prop_assert!((deriv - expect).abs() <= 1e-7 * (1.0 + expect.abs()));
        }

        #[test]
        fn l_matrix_has_sigma_as_char_poly(
            u in prop::collection::vec(-1.5f64..1.5, 1..5),
            kb in any::<bool>(),
        ) {
            let chart = if kb { Chart::KbForm } else { Chart::FirstCompanion };
            let spec = BkmSpec::new(u.len(), Poly::one(), Lambda::Infinity, chart).unwrap();
            let cm = CompanionMatrix::new(u.clone(), chart.companion_sign());
            prop_assert_eq!(cm.char_poly(), spec.sigma(&u));
            let l = spec.l_matrix(&u);
            let tr: f64 = (0..u.len()).map(|i| l[(i, i)]).sum();
            prop_assert!((tr - spec.trace_l(&u)).abs() < 1e-14);
        }
    }
}
