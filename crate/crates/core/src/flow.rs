//! Adaptive Runge–Kutta integration of the commuting flows of H (in x) and
//! F_λ (in t), and assembly of phase-space grids.

use crate::error::{Error, Result};
use crate::operator::Lambda;
use crate::rho::solve_rho;
use crate::scalar::Scalar;
use crate::stackel::{Generator, PhasePoint, StackelSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMethod {
    /// Dormand–Prince 5(4).
    #[default]
    AdaptiveRk45,
    /// Fehlberg 7(8), propagating the eighth-order solution.
    AdaptiveRk78,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FlowConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_step: T,
    pub blowup_norm: T,
    pub method: FlowMethod,
}

impl<T: Scalar> Default for FlowConfig<T> {
    fn default() -> Self {
        FlowConfig {
            rel_tol: T::lit(1e-10),
            abs_tol: T::lit(1e-12),
            max_step: T::lit(0.25),
            blowup_norm: T::lit(1e8),
            method: FlowMethod::AdaptiveRk45,
        }
    }
}

impl<T: Scalar> FlowConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) {
            return Err(Error::config("flow.rel_tol", "must be positive"));
        }
        if !(self.abs_tol > T::zero()) {
            return Err(Error::config("flow.abs_tol", "must be positive"));
        }
        if !(self.max_step > T::zero()) {
            return Err(Error::config("flow.max_step", "must be positive"));
        }
        if !(self.blowup_norm > T::one()) {
            return Err(Error::config("flow.blowup_norm", "must exceed 1"));
        }
        Ok(())
    }
}

/// Butcher tableau of an embedded pair.
struct Tableau {
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    /// Weights of the propagated solution.
    b: Vec<f64>,
    /// Weights of the error estimate (difference of the two solutions).
    e: Vec<f64>,
    /// Order of the error estimator, for step-size control.
    err_order: i32,
}

fn dormand_prince() -> Tableau {
    let b = vec![35. / 384., 0., 500. / 1113., 125. / 192., -2187. / 6784., 11. / 84., 0.];
    let b_low = [
        5179. / 57600.,
        0.,
        7571. / 16695.,
        393. / 640.,
        -92097. / 339200.,
        187. / 2100.,
        1. / 40.,
    ];
    let e = b.iter().zip(b_low).map(|(x, y)| x - y).collect();
    Tableau {
        c: vec![0., 0.2, 0.3, 0.8, 8. / 9., 1., 1.],
        a: vec![
            vec![],
            vec![0.2],
            vec![3. / 40., 9. / 40.],
            vec![44. / 45., -56. / 15., 32. / 9.],
            vec![19372. / 6561., -25360. / 2187., 64448. / 6561., -212. / 729.],
            vec![9017. / 3168., -355. / 33., 46732. / 5247., 49. / 176., -5103. / 18656.],
            vec![35. / 384., 0., 500. / 1113., 125. / 192., -2187. / 6784., 11. / 84.],
        ],
        b,
        e,
        err_order: 5,
    }
}

fn fehlberg78() -> Tableau {
    let b7 = [
        41. / 840., 0., 0., 0., 0., 34. / 105., 9. / 35., 9. / 35., 9. / 280., 9. / 280., 41. / 840., 0., 0.,
    ];
    let b8 = vec![
        0., 0., 0., 0., 0., 34. / 105., 9. / 35., 9. / 35., 9. / 280., 9. / 280., 0., 41. / 840., 41. / 840.,
    ];
    let e = b8.iter().zip(b7).map(|(x, y)| x - y).collect();
    Tableau {
        c: vec![
            0., 2. / 27., 1. / 9., 1. / 6., 5. / 12., 0.5, 5. / 6., 1. / 6., 2. / 3., 1. / 3., 1., 0., 1.,
        ],
        a: vec![
            vec![],
            vec![2. / 27.],
            vec![1. / 36., 1. / 12.],
            vec![1. / 24., 0., 1. / 8.],
            vec![5. / 12., 0., -25. / 16., 25. / 16.],
            vec![1. / 20., 0., 0., 0.25, 0.2],
            vec![-25. / 108., 0., 0., 125. / 108., -65. / 27., 125. / 54.],
            vec![31. / 300., 0., 0., 0., 61. / 225., -2. / 9., 13. / 900.],
            vec![2., 0., 0., -53. / 6., 704. / 45., -107. / 9., 67. / 90., 3.],
            vec![-91. / 108., 0., 0., 23. / 108., -976. / 135., 311. / 54., -19. / 60., 17. / 6., -1. / 12.],
            vec![
                2383. / 4100., 0., 0., -341. / 164., 4496. / 1025., -301. / 82., 2133. / 4100., 45. / 82.,
                45. / 164., 18. / 41.,
            ],
            vec![3. / 205., 0., 0., 0., 0., -6. / 41., -3. / 205., -3. / 41., 3. / 41., 6. / 41., 0.],
            vec![
                -1777. / 4100., 0., 0., -341. / 164., 4496. / 1025., -289. / 82., 2193. / 4100., 51. / 82.,
                33. / 164., 12. / 41., 0., 1.,
            ],
        ],
        b: b8,
        e,
        err_order: 8,
    }
}

impl FlowMethod {
    fn tableau(self) -> Tableau {
        match self {
            FlowMethod::AdaptiveRk45 => dormand_prince(),
            FlowMethod::AdaptiveRk78 => fehlberg78(),
        }
    }
}

/// Per-trajectory bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowDiagnostics<T> {
    pub steps: usize,
    pub rejected: usize,
    /// Largest condition number of m(M) seen at accepted points.
    pub max_cond: T,
    pub warnings: Vec<String>,
}

impl<T: Scalar> FlowDiagnostics<T> {
    fn merge(&mut self, other: &Self) {
        self.steps += other.steps;
        self.rejected += other.rejected;
        self.max_cond = self.max_cond.max(other.max_cond);
        for w in &other.warnings {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }
}

/// Integrates the autonomous system y' = f(y) from time 0 to each target.
///
/// `f` also returns a condition number; above `T::warn_cond()` step growth
/// is frozen and a warning recorded. Errors carry the index of the target
/// being approached.
fn integrate<T, F>(
    f: &F,
    y0: &[T],
    targets: &[T],
    cfg: &FlowConfig<T>,
) -> std::result::Result<(Vec<Vec<T>>, FlowDiagnostics<T>), (usize, Error)>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<(Vec<T>, T)>,
{
    let tab = cfg.method.tableau();
    let mut out: Vec<Option<Vec<T>>> = vec![None; targets.len()];
    let mut diag = FlowDiagnostics {
        max_cond: T::zero(),
        ..Default::default()
    };

    let mut forward: Vec<usize> = (0..targets.len()).filter(|&i| targets[i] >= T::zero()).collect();
    let mut backward: Vec<usize> = (0..targets.len()).filter(|&i| targets[i] < T::zero()).collect();
    forward.sort_by(|&a, &b| targets[a].partial_cmp(&targets[b]).unwrap());
    backward.sort_by(|&a, &b| targets[b].partial_cmp(&targets[a]).unwrap());

    for (dir, order) in [(T::one(), forward), (-T::one(), backward)] {
        let mut t = T::zero();
        let mut y = y0.to_vec();
        let mut h = cfg.max_step.min(T::lit(1e-2));
        for idx in order {
            let target = targets[idx];
            while (target - t) * dir > T::zero() {
                let remaining = (target - t).abs();
                let min_step = T::epsilon() * T::lit(100.0) * (T::one() + t.abs());
                if remaining <= min_step {
                    // rounding-level gap (e.g. from a shifted target): already there
                    t = target;
                    break;
                }
                let mut step = h.min(remaining).min(cfg.max_step);
                let last = step >= remaining;
                if last {
                    step = remaining;
                }
                if step < min_step {
                    return Err((
                        idx,
                        Error::ToleranceFailure {
                            time: t.to_f64_lossy(),
                            step: step.to_f64_lossy(),
                        },
                    ));
                }
                match rk_step(f, &tab, &y, dir * step, cfg) {
                    Ok((y_new, err, cond)) => {
                        if err <= T::one() {
                            t = if last { target } else { t + dir * step };
                            y = y_new;
                            diag.steps += 1;
                            diag.max_cond = diag.max_cond.max(cond);
                            let norm = crate::scalar::max_abs(&y);
                            if !(norm <= cfg.blowup_norm) {
                                return Err((
                                    idx,
                                    Error::BlowUp {
                                        time: t.to_f64_lossy(),
                                        norm: norm.to_f64_lossy(),
                                    },
                                ));
                            }
                            let mut grow = step_factor(err, tab.err_order);
                            if cond > T::warn_cond() {
                                grow = grow.min(T::one());
                                let msg = format!(
                                    "near-singular m(M) (condition {:.2e}) at flow time {:.6}",
                                    cond.to_f64_lossy(),
                                    t.to_f64_lossy()
                                );
                                if diag.warnings.len() < 8 {
                                    diag.warnings.push(msg);
                                }
                            }
                            // a step truncated to hit the target does not shrink h
                            if !last || grow > T::one() {
                                h = step * grow;
                            }
                        } else {
                            diag.rejected += 1;
                            h = step * step_factor(err, tab.err_order);
                        }
                    }
                    Err(e) => {
                        // A stage landed on the singular locus; retry with a smaller step.
                        if step <= min_step * T::lit(4.0) {
                            let reason = e.to_string();
                            return Err((
                                idx,
                                Error::SingularityHit {
                                    time: t.to_f64_lossy(),
                                    reason,
                                },
                            ));
                        }
                        diag.rejected += 1;
                        h = step * T::lit(0.25);
                    }
                }
            }
            out[idx] = Some(y.clone());
        }
    }
    Ok((out.into_iter().map(|o| o.expect("every target visited")).collect(), diag))
}

fn step_factor<T: Scalar>(err: T, order: i32) -> T {
    if err == T::zero() {
        return T::lit(5.0);
    }
    let f = T::lit(0.9) * err.powf(-T::one() / T::from_i32(order).unwrap());
    f.max(T::lit(0.2)).min(T::lit(5.0))
}

/// One embedded RK step; returns the new state, the scaled error norm and
/// the largest condition number reported by `f` across the stages.
fn rk_step<T, F>(f: &F, tab: &Tableau, y: &[T], h: T, cfg: &FlowConfig<T>) -> Result<(Vec<T>, T, T)>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<(Vec<T>, T)>,
{
    let dim = y.len();
    let stages = tab.c.len();
    let mut k: Vec<Vec<T>> = Vec::with_capacity(stages);
    let mut cond = T::zero();
    for s in 0..stages {
        let mut ys = y.to_vec();
        for (j, &a) in tab.a[s].iter().enumerate() {
            if a != 0.0 {
                let a = T::lit(a) * h;
                for (yi, &kj) in ys.iter_mut().zip(&k[j]) {
                    *yi += a * kj;
                }
            }
        }
        let (ks, c) = f(&ys)?;
        if ks.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularityHit {
                time: 0.0,
                reason: "non-finite vector field".into(),
            });
        }
        cond = cond.max(c);
        k.push(ks);
    }
    let mut y_new = y.to_vec();
    let mut err_sq = T::zero();
    for i in 0..dim {
        let mut inc = T::zero();
        let mut e = T::zero();
        for s in 0..stages {
            if tab.b[s] != 0.0 {
                inc += T::lit(tab.b[s]) * k[s][i];
            }
            if tab.e[s] != 0.0 {
                e += T::lit(tab.e[s]) * k[s][i];
            }
        }
        y_new[i] += h * inc;
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        let r = h * e / sc;
        err_sq += r * r;
    }
    let err = (err_sq / T::from_usize(dim).unwrap()).sqrt();
    Ok((y_new, if err.is_finite() { err } else { T::infinity() }, cond))
}

/// Integrates the flow of `gen` from `start` to each of `targets` (any
/// order, either sign; time 0 is the start).
pub fn flow<T: Scalar>(
    sys: &StackelSystem<T>,
    start: &PhasePoint<T>,
    gen: Generator<T>,
    targets: &[T],
    cfg: &FlowConfig<T>,
) -> Result<(Vec<PhasePoint<T>>, FlowDiagnostics<T>)> {
    flow_indexed(sys, start, gen, targets, cfg).map_err(|(_, e)| e)
}

fn flow_indexed<T: Scalar>(
    sys: &StackelSystem<T>,
    start: &PhasePoint<T>,
    gen: Generator<T>,
    targets: &[T],
    cfg: &FlowConfig<T>,
) -> std::result::Result<(Vec<PhasePoint<T>>, FlowDiagnostics<T>), (usize, Error)> {
    if !start.is_finite() {
        return Err((0, Error::InvalidInput("start point is not finite".into())));
    }
    let rhs = |s: &[T]| sys.vector_field(&PhasePoint::from_state(s), gen);
    let (states, diag) = integrate(&rhs, &start.to_state(), targets, cfg)?;
    Ok((states.iter().map(|s| PhasePoint::from_state(s)).collect(), diag))
}

/// x-flow of H.
pub fn flow_h<T: Scalar>(
    sys: &StackelSystem<T>,
    start: &PhasePoint<T>,
    x_targets: &[T],
    cfg: &FlowConfig<T>,
) -> Result<Vec<PhasePoint<T>>> {
    Ok(flow(sys, start, Generator::Hamiltonian, x_targets, cfg)?.0)
}

/// t-flow of F_λ.
pub fn flow_f<T: Scalar>(
    sys: &StackelSystem<T>,
    start: &PhasePoint<T>,
    lambda: Lambda<T>,
    t_targets: &[T],
    cfg: &FlowConfig<T>,
) -> Result<Vec<PhasePoint<T>>> {
    Ok(flow(sys, start, Generator::Integral(lambda), t_targets, cfg)?.0)
}

/// Sweep order for grid assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridOrder {
    /// H-flow along x first, then F-flow along t from every x-slice point.
    #[default]
    XThenT,
    /// F-flow along t first, then H-flow along x from every t-slice point.
    TThenX,
}

/// How physical grid coordinates map to flow parameters: the node (t, x)
/// holds Φ^{x − shift·t}_H ∘ Φ^{scale·t}_{F_λ}(start).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridMapping<T> {
    pub time_scale: T,
    pub x_shift_per_t: T,
}

impl<T: Scalar> Default for GridMapping<T> {
    fn default() -> Self {
        GridMapping {
            time_scale: T::one(),
            x_shift_per_t: T::zero(),
        }
    }
}

/// Phase-space orbit sampled on a rectangular (t, x) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid<T> {
    pub t_nodes: Vec<T>,
    pub x_nodes: Vec<T>,
    /// Row-major: index `ti * x_nodes.len() + xi`.
    pub points: Vec<PhasePoint<T>>,
    /// max_k |a_k(node) − a_k(start)|.
    pub drift: Vec<T>,
    /// Condition number of the reconstruction solve (∞ where it fails).
    pub rho_cond: Vec<T>,
    pub lambda: Lambda<T>,
    pub mapping: GridMapping<T>,
    pub order: GridOrder,
    pub diagnostics: FlowDiagnostics<T>,
}

impl<T: Scalar> PhaseGrid<T> {
    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn at(&self, ti: usize, xi: usize) -> &PhasePoint<T> {
        &self.points[ti * self.nx() + xi]
    }

    pub fn max_drift(&self) -> T {
        crate::scalar::max_abs(&self.drift)
    }

    /// Largest entrywise difference to another grid on the same nodes.
    pub fn max_difference(&self, other: &Self) -> T {
        self.points
            .iter()
            .zip(&other.points)
            .fold(T::zero(), |m, (a, b)| m.max(a.distance(b)))
    }
}

fn check_nodes<T: Scalar>(nodes: &[T], name: &str) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(format!("{name} must be finite and strictly increasing")));
    }
    Ok(())
}

fn nearest_zero<T: Scalar>(nodes: &[T]) -> usize {
    (0..nodes.len())
        .min_by(|&a, &b| nodes[a].abs().partial_cmp(&nodes[b].abs()).unwrap())
        .unwrap_or(0)
}

/// Tolerance for "on the level set": 1e-8 in double precision, relaxed for
/// lower precision, relative to the size of c.
pub fn level_set_tolerance<T: Scalar>(sys: &StackelSystem<T>) -> T {
    let base = T::lit(1e-8).max(T::epsilon() * T::lit(1e3));
    base * (T::one() + sys.c.max_abs_coeff())
}

/// Builds the orbit grid (w, p)(t, x) = Φ^{x − s t}_H ∘ Φ^{a t}_{F_λ}(start).
///
/// The start must lie on the zero level set of all integral coefficients
/// (see [`StackelSystem::repair_c`]).
#[allow(clippy::too_many_arguments)]
pub fn build_grid<T: Scalar>(
    sys: &StackelSystem<T>,
    start: &PhasePoint<T>,
    t_nodes: &[T],
    x_nodes: &[T],
    lambda: Lambda<T>,
    cfg: &FlowConfig<T>,
    mapping: GridMapping<T>,
    order: GridOrder,
) -> Result<PhaseGrid<T>> {
    cfg.validate()?;
    check_nodes(t_nodes, "t nodes")?;
    check_nodes(x_nodes, "x nodes")?;
    let a0 = sys.integral_coefficients(start)?;
    if !(a0.max_abs() <= level_set_tolerance(sys)) {
        return Err(Error::OffLevelSet {
            max_coeff: a0.max_abs().to_f64_lossy(),
        });
    }
    let (nt, nx) = (t_nodes.len(), x_nodes.len());
    let shift = mapping.x_shift_per_t;
    let taus: Vec<T> = t_nodes.iter().map(|&t| mapping.time_scale * t).collect();
    let order = if shift != T::zero() { GridOrder::TThenX } else { order };
    let h_gen = Generator::Hamiltonian;
    let f_gen = Generator::Integral(lambda);

    let mut points: Vec<Option<PhasePoint<T>>> = vec![None; nt * nx];
    let mut diagnostics = FlowDiagnostics {
        max_cond: T::zero(),
        ..Default::default()
    };
    match order {
        GridOrder::XThenT => {
            let t0 = nearest_zero(t_nodes);
            let (slice, d) = flow_indexed(sys, start, h_gen, x_nodes, cfg).map_err(|(i, e)| e.at_node(t0, i))?;
            diagnostics.merge(&d);
            let cols: Vec<_> = slice
                .par_iter()
                .enumerate()
                .map(|(xi, p)| flow_indexed(sys, p, f_gen, &taus, cfg).map_err(|(ti, e)| e.at_node(ti, xi)))
                .collect();
            for (xi, col) in cols.into_iter().enumerate() {
                let (pts, d) = col?;
                diagnostics.merge(&d);
                for (ti, p) in pts.into_iter().enumerate() {
                    points[ti * nx + xi] = Some(p);
                }
            }
        }
        GridOrder::TThenX => {
            let x0 = nearest_zero(x_nodes);
            let (slice, d) = flow_indexed(sys, start, f_gen, &taus, cfg).map_err(|(i, e)| e.at_node(i, x0))?;
            diagnostics.merge(&d);
            let rows: Vec<_> = slice
                .par_iter()
                .enumerate()
                .map(|(ti, p)| {
                    let xs: Vec<T> = x_nodes.iter().map(|&x| x - shift * t_nodes[ti]).collect();
                    flow_indexed(sys, p, h_gen, &xs, cfg).map_err(|(xi, e)| e.at_node(ti, xi))
                })
                .collect();
            for (ti, row) in rows.into_iter().enumerate() {
                let (pts, d) = row?;
                diagnostics.merge(&d);
                for (xi, p) in pts.into_iter().enumerate() {
                    points[ti * nx + xi] = Some(p);
                }
            }
        }
    }
    let points: Vec<PhasePoint<T>> = points.into_iter().map(|p| p.expect("grid filled")).collect();

    let stats: Vec<(T, T)> = points
        .par_iter()
        .map(|p| {
            let drift = sys
                .integral_coefficients(p)
                .map(|a| {
                    a.values
                        .iter()
                        .zip(&a0.values)
                        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
                })
                .unwrap_or(T::infinity());
            let cond = solve_rho(&sys.c, &sys.m, &p.w)
                .map(|r| r.condition_number)
                .unwrap_or(T::infinity());
            (drift, cond)
        })
        .collect();

    Ok(PhaseGrid {
        t_nodes: t_nodes.to_vec(),
        x_nodes: x_nodes.to_vec(),
        points,
        drift: stats.iter().map(|s| s.0).collect(),
        rho_cond: stats.iter().map(|s| s.1).collect(),
        lambda,
        mapping,
        order,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_system(y: &[f64]) -> Result<(Vec<f64>, f64)> {
        Ok((vec![y[0], -y[1]], 1.0))
    }

    fn tableau_consistent(t: &Tableau) {
        for (ci, row) in t.c.iter().zip(&t.a) {
            let s: f64 = row.iter().sum();
            assert!((s - ci).abs() < 1e-14, "row sum {s} vs c {ci}");
        }
        assert!((t.b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(t.e.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn tableaus_are_consistent() {
        tableau_consistent(&dormand_prince());
        tableau_consistent(&fehlberg78());
    }

    fn fixed_step_error(method: FlowMethod, steps: usize) -> f64 {
        let tab = method.tableau();
        let cfg = FlowConfig::default();
        let h = 1.0 / steps as f64;
        let mut y = vec![1.0, 1.0];
        for _ in 0..steps {
            y = rk_step(&exp_system, &tab, &y, h, &cfg).unwrap().0;
        }
        (y[0] - 1f64.exp()).abs().max((y[1] - (-1f64).exp()).abs())
    }

    #[test]
    fn methods_reach_design_order() {
        for (method, order) in [(FlowMethod::AdaptiveRk45, 5.0), (FlowMethod::AdaptiveRk78, 8.0)] {
            let (e1, e2) = (fixed_step_error(method, 4), fixed_step_error(method, 8));
            let observed = (e1 / e2).log2();
            assert!((observed - order).abs() < 0.7, "{method:?}: order {observed}");
        }
    }

    #[test]
    fn adaptive_integration_hits_targets_both_directions() {
        for method in [FlowMethod::AdaptiveRk45, FlowMethod::AdaptiveRk78] {
            let cfg = FlowConfig {
                method,
                ..FlowConfig::default()
            };
            let targets = [2.0, -1.5, 0.0, 0.5];
            let (ys, diag) = integrate(&exp_system, &[1.0, 1.0], &targets, &cfg).unwrap();
            for (y, &t) in ys.iter().zip(&targets) {
                assert!((y[0] - t.exp()).abs() < 1e-8 * t.exp());
                assert!((y[1] - (-t).exp()).abs() < 1e-8 * (-t).exp());
            }
            assert!(diag.steps > 0);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |y: &[f64]| Ok((vec![y[0] * y[0]], 1.0));
        let err = integrate(&f, &[1.0], &[2.0], &FlowConfig::default()).unwrap_err();
        assert!(matches!(err.1, Error::BlowUp { .. } | Error::ToleranceFailure { .. }));
    }

    #[test]
    fn equilibrium_stays_put() {
        // c = μ³, start (0, 0): U₀ = −w₁³ has a critical point at 0
        let sys = StackelSystem::new(Poly::monomial(3), Poly::one());
        let start = PhasePoint::new(vec![0.0], vec![0.0]).unwrap();
        let pts = flow_h(&sys, &start, &[-3.0, 1.0, 5.0], &FlowConfig::default()).unwrap();
        assert!(pts.iter().all(|p| p.w[0] == 0.0 && p.p[0] == 0.0));
    }

    fn random_setup(rng: &mut ChaCha8Rng, big_n: usize) -> (StackelSystem<f64>, PhasePoint<f64>) {
        // potential bounded below along the sampled region: positive-definite-ish c
        let mut cc: Vec<f64> = (0..2 * big_n + 1).map(|_| rng.gen_range(-0.5..0.5)).collect();
        cc.push(1.0);
        let m = Poly::new(vec![-1.0]);
        let w: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let p: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let pt = PhasePoint::new(w, p).unwrap();
        let sys = StackelSystem::new(Poly::new(cc), m);
        let c_new = sys.repair_c(&pt).unwrap();
        (StackelSystem::new(c_new, sys.m), pt)
    }

    #[test]
    fn energy_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut done = 0;
        while done < 6 {
            let big_n = 1 + done % 4;
            let (sys, pt) = random_setup(&mut rng, big_n);
            let h0 = sys.hamiltonian(&pt).unwrap();
            let Ok(pts) = flow_h(&sys, &pt, &[1.0, 2.0, 4.0], &FlowConfig::default()) else {
                continue;
            };
            for p in pts {
                let h = sys.hamiltonian(&p).unwrap();
                // H can vanish through cancellation; measure against the size of its terms
                let u0 = sys.potentials(&p.w).unwrap()[0].abs();
                assert!((h - h0).abs() <= 1e-8 * (1.0 + h0.abs() + u0));
            }
            done += 1;
        }
    }

    #[test]
    fn flows_are_reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut done = 0;
        while done < 4 {
            let big_n = 1 + done % 3;
            let (sys, pt) = random_setup(&mut rng, big_n);
            let Ok(fwd) = flow_h(&sys, &pt, &[1.0], &FlowConfig::default()) else {
                continue;
            };
            let back = flow_h(&sys, &fwd[0], &[-1.0], &FlowConfig::default()).unwrap();
            assert!(back[0].distance(&pt) < 1e-8);
            done += 1;
        }
    }

    #[test]
    fn grid_requires_level_set() {
        let sys = StackelSystem::new(Poly::new(vec![1.0, 0.0, 0.0, 1.0]), Poly::one());
        let pt = PhasePoint::new(vec![0.2], vec![0.3]).unwrap();
        let err = build_grid(
            &sys,
            &pt,
            &[0.0, 0.1],
            &[0.0, 0.1],
            Lambda::Infinity,
            &FlowConfig::default(),
            GridMapping::default(),
            GridOrder::XThenT,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OffLevelSet { .. }));
    }

    #[test]
    fn grid_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut done = 0;
        while done < 3 {
            let big_n = 1 + done;
            let (sys, pt) = random_setup(&mut rng, big_n);
            let ts = [-0.5, -0.2, 0.0, 0.3, 0.5];
            let xs = [-0.6, -0.3, 0.0, 0.4, 0.7];
            let lam = if done == 1 { Lambda::Finite(2.5) } else { Lambda::Infinity };
            let build = |o| build_grid(&sys, &pt, &ts, &xs, lam, &FlowConfig::default(), GridMapping::default(), o);
            let (Ok(a), Ok(b)) = (build(GridOrder::XThenT), build(GridOrder::TThenX)) else {
                continue;
            };
            assert!(a.max_difference(&b) < 1e-6);
            // t = 0 row equals the H-flow
            let row = flow_h(&sys, &pt, &xs, &FlowConfig::default()).unwrap();
            for (xi, p) in row.iter().enumerate() {
                assert!(a.at(2, xi).distance(p) == 0.0);
            }
            assert!(a.max_drift() < 1e-7);
            done += 1;
        }
    }
}
