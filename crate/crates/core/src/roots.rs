//! Simultaneous polynomial root finding (Aberth–Ehrlich iteration).
//!
//! Used for eigenvalues of companion matrices, which are exactly the roots
//! of their characteristic polynomials.

use crate::poly::Poly;
use crate::scalar::Scalar;
use num_complex::Complex;

const MAX_ITER: usize = 500;

/// All complex roots of `p` (with multiplicity). Empty for constants.
pub fn roots<T: Scalar>(p: &Poly<T>) -> Vec<Complex<T>> {
    let d = p.degree();
    if d == 0 {
        return Vec::new();
    }
    let lead = p.leading();
    let a: Vec<Complex<T>> = p
        .coeffs()
        .iter()
        .map(|&c| Complex::new(c / lead, T::zero()))
        .collect();
    let da: Vec<Complex<T>> = (1..=d)
        .map(|k| a[k] * T::from_usize(k).unwrap())
        .collect();
    let eval = |c: &[Complex<T>], z: Complex<T>| {
        c.iter()
            .rev()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &x| acc * z + x)
    };

    // Cauchy bound for the initial circle; the angular offset breaks symmetry.
    let radius = T::one()
        + a[..d]
            .iter()
            .fold(T::zero(), |m, c| m.max(c.norm()));
    let r0 = radius.min(T::lit(1.0) + radius.sqrt());
    let mut z: Vec<Complex<T>> = (0..d)
        .map(|k| {
            let th = T::lit(2.0 * std::f64::consts::PI) * T::from_usize(k).unwrap()
                / T::from_usize(d).unwrap()
                + T::lit(0.4);
            Complex::from_polar(r0, th)
        })
        .collect();

    let eps = T::epsilon();
    for _ in 0..MAX_ITER {
        let mut converged = true;
        for i in 0..d {
            let zi = z[i];
            let pv = eval(&a, zi);
            if pv.norm() == T::zero() {
                continue;
            }
            let ratio = pv / eval(&da, zi);
            let mut s = Complex::new(T::zero(), T::zero());
            for (j, &zj) in z.iter().enumerate() {
                if j != i {
                    let diff = zi - zj;
                    if diff.norm() > T::zero() {
                        s += Complex::new(T::one(), T::zero()) / diff;
                    }
                }
            }
            let denom = Complex::new(T::one(), T::zero()) - ratio * s;
            let step = if denom.norm() > T::zero() { ratio / denom } else { ratio };
            z[i] = zi - step;
            if step.norm() > eps * T::lit(4.0) * (T::one() + z[i].norm()) {
                converged = false;
            }
        }
        if converged {
            break;
        }
    }
    z
}

/// Real roots sorted ascending, or `None` if some root has imaginary part
/// exceeding `imag_tol·(1 + |root|)`.
pub fn real_roots<T: Scalar>(p: &Poly<T>, imag_tol: T) -> Option<Vec<T>> {
    let mut out = Vec::with_capacity(p.degree());
    for r in roots(p) {
        if r.im.abs() > imag_tol * (T::one() + r.re.abs()) {
            return None;
        }
        out.push(r.re);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_real_roots() {
        let p = Poly::from_roots(&[-2.0f64, 0.5, 3.0, 7.0]);
        let r = real_roots(&p, 1e-9).unwrap();
        for (a, b) in r.iter().zip([-2.0, 0.5, 3.0, 7.0]) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn detects_complex_pair() {
        let p = Poly::new(vec![1.0f64, 0.0, 1.0]);
        assert!(real_roots(&p, 1e-9).is_none());
        let r = roots(&p);
        assert!(r.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn double_root_is_approximate() {
        let p = Poly::from_roots(&[1.0f64, 1.0, -1.0]);
        let r = real_roots(&p, 1e-6).unwrap();
        assert!((r[0] + 1.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-7 && (r[2] - 1.0).abs() < 1e-7);
    }
}
