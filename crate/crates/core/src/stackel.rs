//! The reduced Stäckel system on T*ℝᴺ: flat metric g₀, potentials Uₖ,
//! Hamiltonian H, the integral family F_μ with its coefficients, analytic
//! gradients, Poisson brackets and the c-repair step.
//!
//! Conventions: w(μ) = μᴺ + w₁μᴺ⁻¹ + ⋯ + w_N, M = M(w) in `MinusW`
//! companion form, G = g₀⁻¹. The integral coefficients are
//!
//! aₖ = −½ pᵀ D⁽ᵏ⁾ G p − Uₖ,  F_μ = Σₖ aₖ μᴺ⁻¹⁻ᵏ,
//!
//! with D⁽ᵏ⁾ the Horner layers of w, so H = −a₀ and F_∞ = −a₁.

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Matrix};
use crate::operator::{matrix_poly, CompanionMatrix, Lambda};
use crate::poly::Poly;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// A point (w, p) of the reduced phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub w: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Scalar> PhasePoint<T> {
    pub fn new(w: Vec<T>, p: Vec<T>) -> Result<Self> {
        if w.len() != p.len() || w.is_empty() {
            return Err(Error::InvalidInput(format!(
                "phase point needs w and p of equal positive length (got {} and {})",
                w.len(),
                p.len()
            )));
        }
        Ok(PhasePoint { w, p })
    }

    pub fn zero(big_n: usize) -> Self {
        PhasePoint {
            w: vec![T::zero(); big_n],
            p: vec![T::zero(); big_n],
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Flattened state (w, p).
    pub fn to_state(&self) -> Vec<T> {
        let mut s = self.w.clone();
        s.extend_from_slice(&self.p);
        s
    }

    pub fn from_state(s: &[T]) -> Self {
        let n = s.len() / 2;
        PhasePoint {
            w: s[..n].to_vec(),
            p: s[n..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// Max-norm distance to another point.
    pub fn distance(&self, other: &Self) -> T {
        self.w
            .iter()
            .chain(&self.p)
            .zip(other.w.iter().chain(&other.p))
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// The polynomial w(μ).
    pub fn w_poly(&self) -> Poly<T> {
        Poly::monic_from_tail(&self.w)
    }
}

/// Coefficients a₀..a_{N−1} of F_μ = a₀μᴺ⁻¹ + ⋯ + a_{N−1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralVector<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> IntegralVector<T> {
    pub fn eval(&self, mu: T) -> T {
        self.values.iter().fold(T::zero(), |acc, &a| acc * mu + a)
    }

    /// F_μ as a polynomial in μ (ascending coefficients).
    pub fn as_poly(&self) -> Poly<T> {
        Poly::new(self.values.iter().rev().copied().collect())
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.values)
    }
}

/// Values and first derivatives of every integral coefficient aₖ.
#[derive(Clone, Debug)]
pub struct IntegralGradients<T> {
    pub values: Vec<T>,
    /// Entry (k, j) = ∂aₖ/∂wⱼ.
    pub dw: Matrix<T>,
    /// Entry (k, j) = ∂aₖ/∂pⱼ.
    pub dp: Matrix<T>,
    /// Condition number of m(M) at the point.
    pub cond: T,
}

/// A Hamiltonian generating one of the two commuting flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator<T> {
    /// H, generating the x-flow.
    Hamiltonian,
    /// F_λ, generating the t-flow.
    Integral(Lambda<T>),
}

impl<T: Scalar> Generator<T> {
    /// Weights βₖ with generator = Σₖ βₖ aₖ.
    pub fn weights(&self, big_n: usize) -> Vec<T> {
        let mut b = vec![T::zero(); big_n];
        match *self {
            Generator::Hamiltonian => b[0] = -T::one(),
            Generator::Integral(Lambda::Finite(l)) => {
                let mut pw = T::one();
                for k in (0..big_n).rev() {
                    b[k] = pw;
                    pw *= l;
                }
            }
            Generator::Integral(Lambda::Infinity) => {
                if big_n > 1 {
                    b[1] = -T::one();
                }
            }
        }
        b
    }
}

/// g₀⁻¹(w): Hankel matrix with entry (i, j) (1-based) equal to 0 when
/// i + j < N + 1, 1 when i + j = N + 1 and w_{i+j−N−1} otherwise.
pub fn g0_inverse<T: Scalar>(w: &[T]) -> Matrix<T> {
    let n = w.len();
    Matrix::from_fn(n, n, |i, j| {
        let s = i + j;
        if s + 1 < n {
            T::zero()
        } else if s + 1 == n {
            T::one()
        } else {
            w[s - n]
        }
    })
}

/// f(M) v and its derivatives ∂/∂wⱼ (f(M) v) for fixed v, by vector Horner.
fn poly_apply_with_grad<T: Scalar>(
    f: &Poly<T>,
    cm: &CompanionMatrix<T>,
    v: &[T],
) -> (Vec<T>, Vec<Vec<T>>) {
    let n = v.len();
    let mut acc = vec![T::zero(); n];
    let mut dacc = vec![vec![T::zero(); n]; n];
    for &fk in f.coeffs().iter().rev() {
        let head = acc[0];
        for (j, d) in dacc.iter_mut().enumerate() {
            let mut nd = cm.apply(d);
            // ∂M/∂wⱼ = −eⱼ e₁ᵀ
            nd[j] -= head;
            *d = nd;
        }
        acc = cm.apply(&acc);
        for (a, &vi) in acc.iter_mut().zip(v) {
            *a += fk * vi;
        }
    }
    (acc, dacc)
}

fn poly_apply<T: Scalar>(f: &Poly<T>, cm: &CompanionMatrix<T>, v: &[T]) -> Vec<T> {
    let mut acc = vec![T::zero(); v.len()];
    for &fk in f.coeffs().iter().rev() {
        acc = cm.apply(&acc);
        for (a, &vi) in acc.iter_mut().zip(v) {
            *a += fk * vi;
        }
    }
    acc
}

/// The reduced system for fixed c and m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct StackelSystem<T> {
    pub c: Poly<T>,
    pub m: Poly<T>,
}

struct PotentialSolve<T> {
    x: Vec<T>,
    lu: Lu<T>,
    cond: T,
    cm: CompanionMatrix<T>,
}

impl<T: Scalar> StackelSystem<T> {
    pub fn new(c: Poly<T>, m: Poly<T>) -> Self {
        StackelSystem { c, m }
    }

    fn solve_potentials(&self, w: &[T]) -> Result<PotentialSolve<T>> {
        let n = w.len();
        let cm = CompanionMatrix::m_of_w(w);
        let mm = matrix_poly(&self.m, &cm.to_dense());
        let lu = Lu::new(&mm);
        let cond = lu.cond1();
        if !(cond <= T::singular_cond()) {
            return Err(Error::SingularMmatrix {
                cond: cond.to_f64_lossy(),
            });
        }
        let mut e_n = vec![T::zero(); n];
        e_n[n - 1] = T::one();
        let rhs = poly_apply(&self.c, &cm, &e_n);
        let x = lu.solve(&rhs);
        Ok(PotentialSolve { x, lu, cond, cm })
    }

    /// U₀..U_{N−1}: the last column of c(M) m(M)⁻¹, top entry first.
    pub fn potentials(&self, w: &[T]) -> Result<Vec<T>> {
        Ok(self.solve_potentials(w)?.x)
    }

    /// Potentials together with the condition number of m(M).
    pub fn potentials_with_cond(&self, w: &[T]) -> Result<(Vec<T>, T)> {
        let s = self.solve_potentials(w)?;
        Ok((s.x, s.cond))
    }

    /// V_μ(w) = U₀μᴺ⁻¹ + ⋯ + U_{N−1}.
    pub fn v_poly(&self, w: &[T]) -> Result<Poly<T>> {
        let u = self.potentials(w)?;
        Ok(Poly::new(u.into_iter().rev().collect()))
    }

    /// H = ½ g₀⁻¹(p, p) + U₀.
    pub fn hamiltonian(&self, pt: &PhasePoint<T>) -> Result<T> {
        let u = self.potentials(&pt.w)?;
        let g = g0_inverse(&pt.w);
        Ok(T::lit(0.5) * dot(&pt.p, &g.mul_vec(&pt.p)) + u[0])
    }

    /// Kinetic vectors vₖ = D⁽ᵏ⁾ G p and zₖ = D⁽ᵏ⁾ᵀ p.
    fn kinetic_vectors(&self, pt: &PhasePoint<T>, cm: &CompanionMatrix<T>) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>) {
        let n = pt.dim();
        let g = g0_inverse(&pt.w);
        let y = g.mul_vec(&pt.p);
        let mt = cm.to_dense().transpose();
        let mut v = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        v.push(y.clone());
        z.push(pt.p.clone());
        for k in 1..n {
            let wk = pt.w[k - 1];
            let mut vk = cm.apply(&v[k - 1]);
            for (a, &b) in vk.iter_mut().zip(&y) {
                *a += wk * b;
            }
            let mut zk = mt.mul_vec(&z[k - 1]);
            for (a, &b) in zk.iter_mut().zip(&pt.p) {
                *a += wk * b;
            }
            v.push(vk);
            z.push(zk);
        }
        (v, z, y)
    }

    pub fn integral_coefficients(&self, pt: &PhasePoint<T>) -> Result<IntegralVector<T>> {
        let s = self.solve_potentials(&pt.w)?;
        let (v, _, _) = self.kinetic_vectors(pt, &s.cm);
        let half = T::lit(0.5);
        Ok(IntegralVector {
            values: (0..pt.dim())
                .map(|k| -half * dot(&pt.p, &v[k]) - s.x[k])
                .collect(),
        })
    }

    /// F_μ at finite μ, or F_∞.
    pub fn integral(&self, pt: &PhasePoint<T>, mu: Lambda<T>) -> Result<T> {
        let a = self.integral_coefficients(pt)?;
        Ok(dot(&Generator::Integral(mu).weights(pt.dim()), &a.values))
    }

    /// Analytic values and gradients of all aₖ.
    pub fn integral_gradients(&self, pt: &PhasePoint<T>) -> Result<IntegralGradients<T>> {
        let n = pt.dim();
        let s = self.solve_potentials(&pt.w)?;
        let cm = &s.cm;
        let (v, z, y) = self.kinetic_vectors(pt, cm);
        let g = g0_inverse(&pt.w);
        let half = T::lit(0.5);

        // ∂x = m(M)⁻¹ (∂c(M) e_N − ∂m(M) x)
        let mut e_n = vec![T::zero(); n];
        e_n[n - 1] = T::one();
        let (_, dc) = poly_apply_with_grad(&self.c, cm, &e_n);
        let (_, dm) = poly_apply_with_grad(&self.m, cm, &s.x);
        let du: Vec<Vec<T>> = (0..n)
            .map(|j| {
                let r: Vec<T> = dc[j].iter().zip(&dm[j]).map(|(&a, &b)| a - b).collect();
                s.lu.solve(&r)
            })
            .collect();

        // (∂G/∂wⱼ p)ᵢ = p_{N+j−i} for i > j (0-based)
        let dg_p: Vec<Vec<T>> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| if i > j { pt.p[n + j - i] } else { T::zero() })
                    .collect()
            })
            .collect();

        let mut values = vec![T::zero(); n];
        let mut dw = Matrix::zeros(n, n);
        let mut dp = Matrix::zeros(n, n);
        // eₖⱼ = ∂D⁽ᵏ⁾/∂wⱼ · y, recursively over k for each j
        let mut e_prev: Vec<Vec<T>> = vec![vec![T::zero(); n]; n];
        for k in 0..n {
            values[k] = -half * dot(&pt.p, &v[k]) - s.x[k];
            let gz = g.mul_vec(&z[k]);
            for i in 0..n {
                dp[(k, i)] = -half * (v[k][i] + gz[i]);
            }
            if k > 0 {
                let head = v[k - 1][0];
                for (j, e) in e_prev.iter_mut().enumerate() {
                    let mut ne = cm.apply(e);
                    ne[j] -= head;
                    if j == k - 1 {
                        for (a, &b) in ne.iter_mut().zip(&y) {
                            *a += b;
                        }
                    }
                    *e = ne;
                }
            }
            for j in 0..n {
                let kin = dot(&pt.p, &e_prev[j]) + dot(&z[k], &dg_p[j]);
                dw[(k, j)] = -half * kin - du[j][k];
            }
        }
        Ok(IntegralGradients {
            values,
            dw,
            dp,
            cond: s.cond,
        })
    }

    /// Hamiltonian vector field (dw/ds, dp/ds) = (∂F/∂p, −∂F/∂w) of the
    /// generator, flattened, plus the condition number of m(M).
    pub fn vector_field(&self, pt: &PhasePoint<T>, gen: Generator<T>) -> Result<(Vec<T>, T)> {
        let n = pt.dim();
        let gr = self.integral_gradients(pt)?;
        let beta = gen.weights(n);
        let mut out = vec![T::zero(); 2 * n];
        for (k, &b) in beta.iter().enumerate() {
            if b == T::zero() {
                continue;
            }
            for j in 0..n {
                out[j] += b * gr.dp[(k, j)];
                out[n + j] -= b * gr.dw[(k, j)];
            }
        }
        Ok((out, gr.cond))
    }

    /// (∂H/∂w, ∂H/∂p).
    pub fn grad_h(&self, pt: &PhasePoint<T>) -> Result<(Vec<T>, Vec<T>)> {
        self.grad_generator(pt, Generator::Hamiltonian)
    }

    /// (∂F_μ/∂w, ∂F_μ/∂p).
    pub fn grad_f(&self, pt: &PhasePoint<T>, mu: Lambda<T>) -> Result<(Vec<T>, Vec<T>)> {
        self.grad_generator(pt, Generator::Integral(mu))
    }

    fn grad_generator(&self, pt: &PhasePoint<T>, gen: Generator<T>) -> Result<(Vec<T>, Vec<T>)> {
        let n = pt.dim();
        let gr = self.integral_gradients(pt)?;
        let beta = gen.weights(n);
        let comb = |m: &Matrix<T>| -> Vec<T> {
            (0..n)
                .map(|j| beta.iter().enumerate().map(|(k, &b)| b * m[(k, j)]).sum())
                .collect()
        };
        Ok((comb(&gr.dw), comb(&gr.dp)))
    }

    /// Canonical bracket {aᵢ, aⱼ} of two integral coefficients.
    pub fn poisson_bracket(&self, i: usize, j: usize, pt: &PhasePoint<T>) -> Result<T> {
        let gr = self.integral_gradients(pt)?;
        Ok(bracket_from(&gr, i, j))
    }

    /// All brackets {aᵢ, aⱼ}, i < j, from one gradient evaluation.
    pub fn all_brackets(&self, pt: &PhasePoint<T>) -> Result<Vec<(usize, usize, T)>> {
        let gr = self.integral_gradients(pt)?;
        let n = pt.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push((i, j, bracket_from(&gr, i, j)));
            }
        }
        Ok(out)
    }

    /// Point on the zero level set with prescribed eigenvalues q of M(w):
    /// eigen-momenta p_α = signs_α·√(−2c(q_α)/m(q_α)).
    ///
    /// Fails if some q_α lies where −c/m < 0 (beyond rounding).
    pub fn level_set_point(&self, q: &[T], signs: &[T]) -> Result<PhasePoint<T>> {
        if signs.len() != q.len() {
            return Err(Error::InvalidInput("one momentum sign per eigenvalue".into()));
        }
        let tol = T::epsilon().sqrt() * (T::one() + self.c.max_abs_coeff());
        let mut p_q = Vec::with_capacity(q.len());
        for (&y, &s) in q.iter().zip(signs) {
            let my = self.m.eval(y);
            if my == T::zero() {
                return Err(Error::InvalidInput(format!("m vanishes at eigenvalue {y}")));
            }
            let v = -T::lit(2.0) * self.c.eval(y) / my;
            if v < -tol {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {y} lies where -c/m < 0; no real momentum"
                )));
            }
            p_q.push(s.signum() * v.max(T::zero()).sqrt());
        }
        eigen_to_companion(q, &p_q)
    }

    /// c_new = c + m·F(pt), after which every integral coefficient vanishes at pt.
    pub fn repair_c(&self, pt: &PhasePoint<T>) -> Result<Poly<T>> {
        let f = self.integral_coefficients(pt)?.as_poly();
        Ok(&self.c + &(&self.m * &f))
    }

    /// Max violation of the Vandermonde relation
    /// Σₖ (Iₖ + Uₖ) q_αᴺ⁻¹⁻ᵏ = −½ p_α² + c(q_α)/m(q_α)
    /// at a point given in eigenvalue coordinates (q, p_q), where Iₖ is
    /// the kinetic part −½ pᵀ D⁽ᵏ⁾ G p.
    pub fn stackel_check(&self, q: &[T], p_q: &[T]) -> Result<T> {
        let n = q.len();
        if p_q.len() != n || n == 0 {
            return Err(Error::InvalidInput("q and p_q must have equal positive length".into()));
        }
        let mut gap = T::infinity();
        for i in 0..n {
            for j in i + 1..n {
                gap = gap.min((q[i] - q[j]).abs());
            }
        }
        if gap < T::lit(1e-8) {
            return Err(Error::DegenerateEigenvalues {
                gap: gap.to_f64_lossy(),
            });
        }
        let pt = eigen_to_companion(q, p_q)?;
        let s = self.solve_potentials(&pt.w)?;
        let (v, _, _) = self.kinetic_vectors(&pt, &s.cm);
        let half = T::lit(0.5);
        let fst: Vec<T> = (0..n).map(|k| -half * dot(&pt.p, &v[k]) + s.x[k]).collect();
        let mut worst = T::zero();
        for a in 0..n {
            let lhs = fst.iter().fold(T::zero(), |acc, &f| acc * q[a] + f);
            let mq = self.m.eval(q[a]);
            let rhs = -half * p_q[a] * p_q[a] + self.c.eval(q[a]) / mq;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }
}

fn bracket_from<T: Scalar>(gr: &IntegralGradients<T>, i: usize, j: usize) -> T {
    let n = gr.values.len();
    (0..n)
        .map(|l| gr.dw[(i, l)] * gr.dp[(j, l)] - gr.dp[(i, l)] * gr.dw[(j, l)])
        .sum()
}

/// Converts eigenvalue coordinates (q, p_q) to companion coordinates (w, p)
/// via wⱼ = coefficients of ∏(μ − qᵢ) and p_w = J⁻ᵀ p_q with J = ∂w/∂q.
pub fn eigen_to_companion<T: Scalar>(q: &[T], p_q: &[T]) -> Result<PhasePoint<T>> {
    let n = q.len();
    let w = Poly::from_roots(q).tail(n);
    let mut jac = Matrix::zeros(n, n);
    for a in 0..n {
        let others: Vec<T> = q
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != a)
            .map(|(_, &x)| x)
            .collect();
        let pa = Poly::from_roots(&others);
        // ∂/∂q_a ∏(μ − qᵢ) = −∏_{i≠a}(μ − qᵢ); wⱼ is the coefficient of μᴺ⁻ʲ
        for j in 1..=n {
            jac[(j - 1, a)] = -pa.coeff(n - j);
        }
    }
    let lu = Lu::new(&jac.transpose());
    if lu.is_singular() {
        return Err(Error::DegenerateEigenvalues { gap: 0.0 });
    }
    PhasePoint::new(w, lu.solve(p_q))
}

/// Companion momentum p_w from eigenvalue momenta: the transpose of
/// [`eigen_to_companion`]'s map, p_q = Jᵀ p_w.
pub fn companion_to_eigen_momenta<T: Scalar>(q: &[T], p_w: &[T]) -> Vec<T> {
    let n = q.len();
    (0..n)
        .map(|a| {
            let others: Vec<T> = q
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != a)
                .map(|(_, &x)| x)
                .collect();
            let pa = Poly::from_roots(&others);
            (1..=n).map(|j| -pa.coeff(n - j) * p_w[j - 1]).sum()
        })
        .collect()
}
