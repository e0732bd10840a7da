//! The reconstruction map: ρ(μ, w) and Q(μ, w) from the divisibility
//! condition ρ w² − m Q = c, and the map w ↦ u.

use crate::error::{Error, Result};
use crate::linalg::{solve_equilibrated, Matrix};
use crate::operator::BkmSpec;
use crate::poly::Poly;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct RhoResult<T> {
    /// Monic, degree n.
    pub rho: Poly<T>,
    /// Degree ≤ 2N − 1.
    pub q: Poly<T>,
    /// 1-norm condition number of the column-equilibrated system.
    pub condition_number: T,
}

impl<T: Scalar> RhoResult<T> {
    /// Coefficients s₁..s_n of ρ = μⁿ + s₁μⁿ⁻¹ + ⋯ + s_n.
    pub fn sigma_tail(&self) -> Vec<T> {
        self.rho.tail(self.rho.degree())
    }
}

/// Component count implied by deg c = 2N + n.
pub fn component_count<T: Scalar>(c: &Poly<T>, big_n: usize) -> Result<usize> {
    let d = c.degree();
    if d <= 2 * big_n {
        return Err(Error::InvalidInput(format!(
            "deg c = {d} must exceed 2N = {}",
            2 * big_n
        )));
    }
    Ok(d - 2 * big_n)
}

/// Solves ρ w² − m Q = c for monic ρ of degree n = deg c − 2N and Q of
/// degree ≤ 2N − 1, as a dense (2N + n)-square linear system.
pub fn solve_rho<T: Scalar>(c: &Poly<T>, m: &Poly<T>, w: &[T]) -> Result<RhoResult<T>> {
    let big_n = w.len();
    let n = component_count(c, big_n)?;
    if m.is_zero() {
        return Err(Error::InvalidInput("m must not be zero".into()));
    }
    if m.degree() > n {
        return Err(Error::InvalidInput(format!(
            "deg m = {} exceeds n = {n}",
            m.degree()
        )));
    }
    if !c.is_monic(T::lit(1e-12)) {
        return Err(Error::InvalidInput("c must be monic".into()));
    }
    let w2 = {
        let wp = Poly::monic_from_tail(w);
        &wp * &wp
    };
    let size = 2 * big_n + n;

    // Columns: s_1..s_n multiply μ^{n−i} w², then Q's coefficients multiply −m μʲ.
    let mut a = Matrix::zeros(size, size);
    for i in 1..=n {
        for (k, &wc) in w2.coeffs().iter().enumerate() {
            let row = k + n - i;
            if row < size {
                a[(row, i - 1)] += wc;
            }
        }
    }
    for j in 0..2 * big_n {
        for (k, &mc) in m.coeffs().iter().enumerate() {
            let row = k + j;
            if row < size {
                a[(row, n + j)] -= mc;
            }
        }
    }
    // The μⁿ w² part is known; move it to the right-hand side.
    let rhs: Vec<T> = (0..size)
        .map(|k| {
            let known = if k >= n { w2.coeff(k - n) } else { T::zero() };
            c.coeff(k) - known
        })
        .collect();

    let (x, cond) = solve_equilibrated(&a, &rhs);
    if !(cond <= T::singular_cond()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SharedRoot {
            cond: cond.to_f64_lossy(),
        });
    }

    let mut rho_coeffs = vec![T::zero(); n + 1];
    rho_coeffs[n] = T::one();
    for i in 1..=n {
        rho_coeffs[n - i] = x[i - 1];
    }
    let rho = Poly::new(rho_coeffs);
    let q = Poly::new(x[n..].to_vec());

    // Re-check the identity coefficientwise.
    let lhs = &(&rho * &w2) - &(m * &q);
    let scale = c
        .max_abs_coeff()
        .max((&rho * &w2).max_abs_coeff())
        .max(T::one());
    let resid = (&lhs - c).max_abs_coeff();
    if !(resid <= T::lit(1e-9) * scale) {
        return Err(Error::SharedRoot {
            cond: cond.to_f64_lossy(),
        });
    }
    Ok(RhoResult {
        rho,
        q,
        condition_number: cond,
    })
}

/// ρ by Lagrange interpolation of ρ(λᵢ) = c(λᵢ)/w²(λᵢ) at the n distinct
/// roots λᵢ of m. Independent of [`solve_rho`]; kept as a cross-check.
pub fn rho_by_interpolation<T: Scalar>(c: &Poly<T>, m_roots: &[T], w: &[T]) -> Result<Poly<T>> {
    let n = m_roots.len();
    let big_n = w.len();
    let wp = Poly::monic_from_tail(w);
    let mut pts = Vec::with_capacity(n);
    for &l in m_roots {
        let wl = wp.eval(l);
        let bound = T::lit(1e-10) * (T::one() + l.abs().powi(big_n as i32));
        if wl.abs() < bound {
            return Err(Error::EvaluationAtEigenvalue {
                node: l.to_f64_lossy(),
                value: wl.abs().to_f64_lossy(),
            });
        }
        pts.push((l, c.eval(l) / (wl * wl) - l.powi(n as i32)));
    }
    let corr = if n == 0 {
        Poly::zero()
    } else {
        Poly::lagrange(&pts)?
    };
    Ok(&Poly::monomial(n) + &corr)
}

/// u = 𝓡(w), reported in the chart of `spec`.
pub fn map_r<T: Scalar>(w: &[T], spec: &BkmSpec<T>, c: &Poly<T>) -> Result<Vec<T>> {
    let r = solve_rho(c, &spec.m, w)?;
    if r.rho.degree() != spec.n {
        return Err(Error::InvalidInput(format!(
            "deg c − 2N = {} does not match n = {}",
            r.rho.degree(),
            spec.n
        )));
    }
    Ok(spec.chart.u_from_sigma(&r.sigma_tail()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Chart, Lambda};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kb_c() -> Poly<f64> {
        Poly::new(vec![0., 0., 1., 0., -2., 0., 1.])
    }

    #[test]
    fn kdv_reconstruction_is_twice_w1() {
        // monic degree 5 with zero μ⁴ coefficient
        let c = Poly::new(vec![0.3, -1.0, 0.2, 0.7, 0.0, 1.0]);
        let spec = BkmSpec::new(1, Poly::one(), Lambda::Infinity, Chart::FirstCompanion).unwrap();
        for w in [[0.4f64, -0.3], [-1.2, 0.9], [2.0, 0.0]] {
            let r = solve_rho(&c, &spec.m, &w).unwrap();
            assert!((r.rho.coeff(0) + 2.0 * w[0]).abs() < 1e-12);
            let u = map_r(&w, &spec, &c).unwrap();
            assert!((u[0] - 2.0 * w[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn kb_reconstruction_matches_closed_form_polynomials() {
        let spec = BkmSpec::new(2, Poly::one(), Lambda::Infinity, Chart::KbForm).unwrap();
        for (q1, q2) in [(0.3, -0.7), (-0.2, 0.5), (0.0, 0.0), (0.9, 0.1)] {
            let w = [-(q1 + q2), q1 * q2];
            let r = solve_rho(&kb_c(), &spec.m, &w).unwrap();
            assert!((r.rho.coeff(1) + 2.0 * w[0]).abs() < 1e-12);
            let s2 = 3.0 * w[0] * w[0] - 2.0 * w[1] - 2.0;
            assert!((r.rho.coeff(0) - s2).abs() < 1e-12);
            let u = map_r(&w, &spec, &kb_c()).unwrap();
            assert!((u[0] - (2.0 * q1 + 2.0 * q2)).abs() < 1e-12);
            let u2 = 3.0 * q1 * q1 + 4.0 * q1 * q2 + 3.0 * q2 * q2 - 2.0;
            assert!((u[1] - u2).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_power_is_exactly_divisible() {
        for (big_n, n) in [(1, 1), (2, 2), (3, 1)] {
            let c = Poly::monomial(2 * big_n + n);
            let r = solve_rho(&c, &Poly::one(), &vec![0.0; big_n]).unwrap();
            assert_eq!(r.rho, Poly::monomial(n));
            assert!(r.q.is_zero() || r.q.max_abs_coeff() < 1e-15);
        }
    }

    #[test]
    fn shared_root_is_detected() {
        // m = μ − 1 and w = (μ − 1)(μ + 2) share the root 1
        let m = Poly::new(vec![-1.0, 1.0]);
        let w = Poly::from_roots(&[1.0, -2.0]).tail(2);
        let c = Poly::from_roots(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!(matches!(solve_rho(&c, &m, &w), Err(Error::SharedRoot { .. })));
    }

    #[test]
    fn single_node_interpolation() {
        let c = Poly::new(vec![0.8f64, 0.1, -0.3, 0.2, 0.5, 1.0]);
        let w = [0.4, 1.3];
        let rho = rho_by_interpolation(&c, &[0.0], &w).unwrap();
        let expect = c.coeff(0) / (w[1] * w[1]);
        assert!((rho.coeff(0) - expect).abs() < 1e-14);
        assert_eq!(rho.degree(), 1);
    }

    #[test]
    fn interpolation_rejects_eigenvalue_nodes() {
        let c = Poly::monomial(5);
        let w = Poly::from_roots(&[0.5, -1.0]).tail(2);
        assert!(matches!(
            rho_by_interpolation(&c, &[0.5], &w),
            Err(Error::EvaluationAtEigenvalue { .. })
        ));
    }

    #[test]
    fn dual_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(1..=3);
            let big_n = rng.gen_range(1..=4);
            let roots: Vec<f64> = (0..n).map(|i| -1.5 + 1.5 * i as f64 + rng.gen_range(-0.2..0.2)).collect();
            let m = Poly::from_roots(&roots).scale(rng.gen_range(0.5..2.0));
            let mut cc: Vec<f64> = (0..2 * big_n + n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            cc.push(1.0);
            let c = Poly::new(cc);
            let w: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wp = Poly::monic_from_tail(&w);
            if roots.iter().any(|&r| wp.eval(r).abs() < 0.05) {
                continue;
            }
            let a = solve_rho(&c, &m, &w).unwrap().rho;
            let b = rho_by_interpolation(&c, &roots, &w).unwrap();
            let scale = a.max_abs_coeff().max(1.0);
            for k in 0..=n {
                assert!((a.coeff(k) - b.coeff(k)).abs() <= 1e-9 * scale);
            }
        }
    }

    proptest! {
        #[test]
        fn identity_holds_pointwise(
            big_n in 1usize..4,
            n in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Poly::new((0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            prop_assume!(!m.is_zero());
            let mut cc: Vec<f64> = (0..2 * big_n + n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            cc.push(1.0);
            let c = Poly::new(cc);
            let w: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Ok(r) = solve_rho(&c, &m, &w) {
                let wp = Poly::monic_from_tail(&w);
                for _ in 0..20 {
                    let x = rng.gen_range(-2.0..2.0);
                    let wx = wp.eval(x);
                    let lhs = r.rho.eval(x) * wx * wx - m.eval(x) * r.q.eval(x) - c.eval(x);
                    let sc = 1.0 + c.eval(x).abs() + (r.rho.eval(x) * wx * wx).abs();
                    prop_assert!(lhs.abs() <= 1e-8 * sc);
                }
            }
        }

        #[test]
        fn gauge_shift_leaves_rho_unchanged(
            big_n in 1usize..4,
            n in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mc: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            mc.push(rng.gen_range(0.5..1.5));
            let m = Poly::new(mc);
            let mut cc: Vec<f64> = (0..2 * big_n + n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            cc.push(1.0);
            let c = Poly::new(cc);
            let g = Poly::new((0..2 * big_n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let c2 = &c + &(&m * &g);
            let w: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let (Ok(a), Ok(b)) = (solve_rho(&c, &m, &w), solve_rho(&c2, &m, &w)) {
                prop_assume!(a.condition_number < 1e8);
                for k in 0..=n {
                    prop_assert!((a.rho.coeff(k) - b.rho.coeff(k)).abs() <= 1e-9 * (1.0 + a.rho.max_abs_coeff()));
                }
                let dq = &(&b.q - &a.q) + &g;
                prop_assert!(dq.max_abs_coeff() <= 1e-8 * (1.0 + a.q.max_abs_coeff()));
            }
        }
    }
}
