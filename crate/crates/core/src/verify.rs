//! Finite-difference residuals and oracles tying synthesized grids back to
//! the PDEs and to the intermediate identities of the construction.
//!
//! Solution residuals use 4th-order central stencils (7 points for third
//! derivatives) and skip three nodes at every boundary.

use crate::error::{Error, Result};
use crate::flow::{build_grid, FlowConfig, GridMapping, GridOrder, PhaseGrid};
use crate::linalg::Lu;
use crate::operator::Lambda;
use crate::poly::Poly;
use crate::rho::solve_rho;
use crate::roots::real_roots;
use crate::scalar::Scalar;
use crate::stackel::{PhasePoint, StackelSystem};
use crate::synth::SolutionGrid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Boundary nodes excluded on each side of an axis.
pub const MARGIN: usize = 3;
/// Minimum node count per differentiated axis.
pub const MIN_NODES: usize = 2 * MARGIN + 1;
/// Fraction of skipped nodes above which an oracle is inconclusive.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Summary statistics of a residual field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub max_abs: f64,
    pub rms: f64,
    /// Grid spacing (dt, dx); zero along an axis that was not differentiated.
    pub dt: f64,
    pub dx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_order: Option<f64>,
    pub samples: usize,
    #[serde(default)]
    pub skipped: usize,
    #[serde(default)]
    pub inconclusive: bool,
}

impl ResidualReport {
    pub fn from_values(name: impl Into<String>, values: &[f64], dt: f64, dx: f64) -> Self {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rms = if values.is_empty() {
            0.0
        } else {
            (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
        };
        ResidualReport {
            name: name.into(),
            max_abs,
            rms: rms.min(max_abs),
            dt,
            dx,
            convergence_order: None,
            samples: values.len(),
            skipped: 0,
            inconclusive: values.is_empty(),
        }
    }

    pub fn with_order(mut self, order: Option<f64>) -> Self {
        self.convergence_order = order;
        self
    }

    /// True when the report is conclusive and its max residual is within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        !self.inconclusive && self.max_abs <= tol
    }
}

/// Evolution and constraint residuals of a BKM system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkmResidual {
    pub evolution: ResidualReport,
    pub constraint: ResidualReport,
}

impl BkmResidual {
    pub fn max_abs(&self) -> f64 {
        self.evolution.max_abs.max(self.constraint.max_abs)
    }
}

/// Least-squares slope of log(err) against log(h).
///
/// Returns `None` with fewer than two usable points.
pub fn fit_order(h: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Uniform node spacing, requiring at least [`MIN_NODES`] nodes.
pub fn uniform_step<T: Scalar>(nodes: &[T], axis: &str) -> Result<T> {
    if nodes.len() < MIN_NODES {
        return Err(Error::GridTooCoarse(format!(
            "{axis} axis has {} nodes, need at least {MIN_NODES}",
            nodes.len()
        )));
    }
    let h = (nodes[nodes.len() - 1] - nodes[0]) / T::from_usize(nodes.len() - 1).unwrap();
    let tol = T::lit(1e-6) * h.abs();
    if nodes.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > tol) {
        return Err(Error::InvalidInput(format!("{axis} nodes are not uniformly spaced")));
    }
    Ok(h)
}

fn d1<T: Scalar>(f: impl Fn(isize) -> T, h: T) -> T {
    (f(-2) - T::lit(8.0) * f(-1) + T::lit(8.0) * f(1) - f(2)) / (T::lit(12.0) * h)
}

fn d2<T: Scalar>(f: impl Fn(isize) -> T, h: T) -> T {
    (-f(-2) + T::lit(16.0) * (f(-1) + f(1)) - T::lit(30.0) * f(0) - f(2)) / (T::lit(12.0) * h * h)
}

fn d3<T: Scalar>(f: impl Fn(isize) -> T, h: T) -> T {
    (f(-3) - T::lit(8.0) * f(-2) + T::lit(13.0) * f(-1) - T::lit(13.0) * f(1) + T::lit(8.0) * f(2) - f(3))
        / (T::lit(8.0) * h * h * h)
}

/// Row-major scalar field on an nt × nx grid.
struct Field<'a, T> {
    data: &'a [T],
    nx: usize,
}

impl<T: Scalar> Field<'_, T> {
    fn at(&self, ti: usize, xi: usize) -> T {
        self.data[ti * self.nx + xi]
    }

    fn along_x(&self, ti: usize, xi: usize) -> impl Fn(isize) -> T + '_ {
        move |k| self.data[ti * self.nx + (xi as isize + k) as usize]
    }

    fn along_t(&self, ti: usize, xi: usize) -> impl Fn(isize) -> T + '_ {
        move |k| self.data[(ti as isize + k) as usize * self.nx + xi]
    }
}

fn interior(len: usize) -> std::ops::Range<usize> {
    MARGIN..len - MARGIN
}

/// Per-node solution data needed by both BKM residuals.
struct NodeDerivs<T> {
    u: Vec<T>,
    u_t: Vec<T>,
    u_x: Vec<T>,
    q: T,
    q_x: T,
    q_xx: T,
    q_xxx: T,
}

fn node_derivs<T: Scalar>(sol: &SolutionGrid<T>, ti: usize, xi: usize, ht: T, hx: T) -> NodeDerivs<T> {
    let nx = sol.nx();
    let q = Field { data: &sol.q, nx };
    let mut u_t = Vec::with_capacity(sol.n());
    let mut u_x = Vec::with_capacity(sol.n());
    for comp in &sol.u {
        let f = Field { data: comp, nx };
        u_t.push(d1(f.along_t(ti, xi), ht));
        u_x.push(d1(f.along_x(ti, xi), hx));
    }
    NodeDerivs {
        u: sol.u_at(ti, xi),
        u_t,
        u_x,
        q: q.at(ti, xi),
        q_x: d1(q.along_x(ti, xi), hx),
        q_xx: d2(q.along_x(ti, xi), hx),
        q_xxx: d3(q.along_x(ti, xi), hx),
    }
}

fn flat(rows: Vec<Vec<f64>>) -> Vec<f64> {
    rows.into_iter().flatten().collect()
}

/// Residual of u_t = q_xxx ζ + (L + q Id) u_x and of 0 = 2q + m_n q_xx − tr L.
///
/// When m_n = 0 the constraint is the algebraic q = ½ tr L, checked on every node.
pub fn residual_bkm_infinite<T: Scalar>(sol: &SolutionGrid<T>) -> Result<BkmResidual> {
    let spec = &sol.meta.spec;
    if !spec.lambda.is_infinite() {
        return Err(Error::InvalidInput("solution grid has finite lambda".into()));
    }
    let ht = uniform_step(&sol.t_nodes, "t")?;
    let hx = uniform_step(&sol.x_nodes, "x")?;
    let (nt, nx) = (sol.nt(), sol.nx());
    let m_n = spec.m_top();
    let half = T::lit(0.5);

    let evo = flat(
        interior(nt)
            .into_par_iter()
            .map(|ti| {
                let mut out = Vec::new();
                for xi in interior(nx) {
                    let d = node_derivs(sol, ti, xi, ht, hx);
                    let zeta = spec.zeta(&d.u);
                    let lux = spec.l_matrix(&d.u).add_diag(d.q).mul_vec(&d.u_x);
                    for i in 0..spec.n {
                        out.push((d.u_t[i] - d.q_xxx * zeta[i] - lux[i]).to_f64_lossy());
                    }
                }
                out
            })
            .collect(),
    );

    let q = Field { data: &sol.q, nx };
    let (cons, cons_dx) = if m_n == T::zero() {
        let vals: Vec<f64> = (0..nt * nx)
            .map(|k| (sol.q[k] - half * spec.trace_l(&sol.u_at(k / nx, k % nx))).to_f64_lossy())
            .collect();
        (vals, 0.0)
    } else {
        let mut vals = Vec::new();
        for ti in 0..nt {
            for xi in interior(nx) {
                let r = T::lit(2.0) * q.at(ti, xi) + m_n * d2(q.along_x(ti, xi), hx)
                    - spec.trace_l(&sol.u_at(ti, xi));
                vals.push(r.to_f64_lossy());
            }
        }
        (vals, hx.to_f64_lossy())
    };
    Ok(BkmResidual {
        evolution: ResidualReport::from_values("bkm-infinite-evolution", &evo, ht.to_f64_lossy(), hx.to_f64_lossy()),
        constraint: ResidualReport::from_values("bkm-infinite-constraint", &cons, 0.0, cons_dx),
    })
}

/// Residual of u_t = q_xxx (L − λ)⁻¹ζ + q (L − λ)⁻¹u_x and of
/// 1 = m(λ)(q_xx q − ½q_x²) + σ(λ, u) q².
pub fn residual_bkm_finite<T: Scalar>(sol: &SolutionGrid<T>) -> Result<BkmResidual> {
    let spec = &sol.meta.spec;
    let lambda = match spec.lambda {
        Lambda::Finite(l) => l,
        Lambda::Infinity => return Err(Error::InvalidInput("solution grid has lambda = inf".into())),
    };
    let ht = uniform_step(&sol.t_nodes, "t")?;
    let hx = uniform_step(&sol.x_nodes, "x")?;
    let (nt, nx) = (sol.nt(), sol.nx());

    let shifted = |u: &[T]| -> Option<Lu<T>> {
        let lu = Lu::new(&spec.l_matrix(u).add_diag(-lambda));
        (!lu.is_singular() && lu.cond1() < T::singular_cond()).then_some(lu)
    };
    for ti in 0..nt {
        for xi in 0..nx {
            if shifted(&sol.u_at(ti, xi)).is_none() {
                return Err(Error::EigenvalueCollision {
                    t_index: ti,
                    x_index: xi,
                });
            }
        }
    }

    let m_l = spec.m.eval(lambda);
    let half = T::lit(0.5);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = interior(nt)
        .into_par_iter()
        .map(|ti| {
            let (mut evo, mut cons) = (Vec::new(), Vec::new());
            for xi in interior(nx) {
                let d = node_derivs(sol, ti, xi, ht, hx);
                let lu = shifted(&d.u).expect("checked above");
                let a = lu.solve(&spec.zeta(&d.u));
                let b = lu.solve(&d.u_x);
                for i in 0..spec.n {
                    evo.push((d.u_t[i] - d.q_xxx * a[i] - d.q * b[i]).to_f64_lossy());
                }
                let sig = spec.sigma(&d.u).eval(lambda);
                let r = T::one() - m_l * (d.q_xx * d.q - half * d.q_x * d.q_x) - sig * d.q * d.q;
                cons.push(r.to_f64_lossy());
            }
            (evo, cons)
        })
        .collect();
    let (evo, cons): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let (dt, dx) = (ht.to_f64_lossy(), hx.to_f64_lossy());
    Ok(BkmResidual {
        evolution: ResidualReport::from_values("bkm-finite-evolution", &flat(evo), dt, dx),
        constraint: ResidualReport::from_values("bkm-finite-constraint", &flat(cons), 0.0, dx),
    })
}

/// w(μ) = μᴺ + w₁μᴺ⁻¹ + ⋯ + w_N on every node of the grid.
fn w_field<T: Scalar>(grid: &PhaseGrid<T>, mu: T) -> Vec<T> {
    grid.points.iter().map(|p| p.w_poly().eval(mu)).collect()
}

/// Residual of m(μ)(w_xx w − ½w_x²) + ρ(μ, w)w² − c(μ) at each μ sample.
pub fn residual_base<T: Scalar>(
    grid: &PhaseGrid<T>,
    mu_samples: &[T],
    c_new: &Poly<T>,
    m: &Poly<T>,
) -> Result<ResidualReport> {
    let hx = uniform_step(&grid.x_nodes, "x")?;
    let (nt, nx) = (grid.nt(), grid.nx());
    let rho: Vec<Poly<T>> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(k, p)| solve_rho(c_new, m, &p.w).map(|r| r.rho).map_err(|e| e.at_node(k / nx, k % nx)))
        .collect::<Result<_>>()?;
    let half = T::lit(0.5);
    let vals: Vec<Vec<f64>> = mu_samples
        .par_iter()
        .map(|&mu| {
            let w = w_field(grid, mu);
            let f = Field { data: &w, nx };
            let (m_mu, c_mu) = (m.eval(mu), c_new.eval(mu));
            let mut out = Vec::new();
            for ti in 0..nt {
                for xi in interior(nx) {
                    let wv = f.at(ti, xi);
                    let wx = d1(f.along_x(ti, xi), hx);
                    let wxx = d2(f.along_x(ti, xi), hx);
                    let r = m_mu * (wxx * wv - half * wx * wx) + rho[ti * nx + xi].eval(mu) * wv * wv - c_mu;
                    out.push(r.to_f64_lossy());
                }
            }
            out
        })
        .collect();
    Ok(ResidualReport::from_values("base-equation", &flat(vals), 0.0, hx.to_f64_lossy()))
}

/// Residual of the solitonic equation for w(μ) along the grid's t-flow:
/// ∂_τ w(μ) = (w_x(μ)w(λ) − w(μ)w_x(λ))/(μ − λ) for finite λ and
/// ∂_τ w(μ) = μw_x + w_x w₁ − w(w₁)_x for λ = ∞.
///
/// τ is the flow parameter of F_λ; physical t-derivatives on the grid are
/// converted with the grid's time scale and x-shift.
pub fn residual_solitonic<T: Scalar>(grid: &PhaseGrid<T>, mu: T, lambda: Lambda<T>) -> Result<ResidualReport> {
    if let Lambda::Finite(l) = lambda {
        if l == mu {
            return Err(Error::MuEqualsLambda);
        }
    }
    let ht = uniform_step(&grid.t_nodes, "t")?;
    let hx = uniform_step(&grid.x_nodes, "x")?;
    let (nt, nx) = (grid.nt(), grid.nx());
    let GridMapping {
        time_scale,
        x_shift_per_t,
    } = grid.mapping;
    let w_mu = w_field(grid, mu);
    let other: Vec<T> = match lambda {
        Lambda::Finite(l) => w_field(grid, l),
        Lambda::Infinity => grid.points.iter().map(|p| p.w[0]).collect(),
    };
    let fm = Field { data: &w_mu, nx };
    let fo = Field { data: &other, nx };
    let vals: Vec<Vec<f64>> = interior(nt)
        .into_par_iter()
        .map(|ti| {
            let mut out = Vec::new();
            for xi in interior(nx) {
                let wx = d1(fm.along_x(ti, xi), hx);
                let w_tau = (d1(fm.along_t(ti, xi), ht) + x_shift_per_t * wx) / time_scale;
                let (w, o, ox) = (fm.at(ti, xi), fo.at(ti, xi), d1(fo.along_x(ti, xi), hx));
                let rhs = match lambda {
                    Lambda::Finite(l) => (wx * o - w * ox) / (mu - l),
                    Lambda::Infinity => mu * wx + wx * o - w * ox,
                };
                out.push((w_tau - rhs).to_f64_lossy());
            }
            out
        })
        .collect();
    Ok(ResidualReport::from_values(
        "solitonic",
        &flat(vals),
        ht.to_f64_lossy(),
        hx.to_f64_lossy(),
    ))
}

/// Sorted eigenvalues of M(w) when real and separated by at least `min_gap`.
fn separated_eigenvalues<T: Scalar>(w: &PhasePoint<T>, min_gap: T) -> Option<Vec<T>> {
    let y = real_roots(&w.w_poly(), T::lit(1e-7).max(T::epsilon().sqrt()))?;
    y.windows(2).all(|p| p[1] - p[0] >= min_gap).then_some(y)
}

/// Checks ½(ẏ_α ∏_{i≠α}(y_α − yᵢ))² + c(y_α)/m(y_α) = 0 along each x-row,
/// with ẏ from finite differences of the eigenvalues of M(w).
///
/// Nodes whose eigenvalues are complex or closer than 1e-6 (or where a
/// stencil neighbour is such a node) are skipped; more than 20% skipped
/// marks the report inconclusive.
pub fn separation_oracle<T: Scalar>(grid: &PhaseGrid<T>, c_new: &Poly<T>, m: &Poly<T>) -> Result<ResidualReport> {
    let hx = uniform_step(&grid.x_nodes, "x")?;
    let (nt, nx) = (grid.nt(), grid.nx());
    let min_gap = T::lit(1e-6);
    let rows: Vec<(Vec<f64>, usize)> = (0..nt)
        .into_par_iter()
        .map(|ti| {
            let ys: Vec<Option<Vec<T>>> = (0..nx)
                .map(|xi| separated_eigenvalues(grid.at(ti, xi), min_gap))
                .collect();
            let (mut out, mut skipped) = (Vec::new(), 0);
            for xi in interior(nx) {
                if (xi - 2..=xi + 2).any(|k| ys[k].is_none()) {
                    skipped += 1;
                    continue;
                }
                let y = ys[xi].as_ref().unwrap();
                for (a, &ya) in y.iter().enumerate() {
                    let m_y = m.eval(ya);
                    if m_y == T::zero() {
                        skipped += 1;
                        continue;
                    }
                    let dy = d1(|k| ys[(xi as isize + k) as usize].as_ref().unwrap()[a], hx);
                    let prod = y
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != a)
                        .fold(T::one(), |acc, (_, &yi)| acc * (ya - yi));
                    let v = dy * prod;
                    out.push((T::lit(0.5) * v * v + c_new.eval(ya) / m_y).to_f64_lossy());
                }
            }
            (out, skipped)
        })
        .collect();
    let total = nt * interior(nx).len();
    let skipped: usize = rows.iter().map(|r| r.1).sum();
    let mut rep = ResidualReport::from_values(
        "separation",
        &flat(rows.into_iter().map(|r| r.0).collect()),
        0.0,
        hx.to_f64_lossy(),
    );
    rep.skipped = skipped;
    rep.inconclusive |= total == 0 || skipped as f64 > MAX_SKIPPED_FRACTION * total as f64;
    Ok(rep)
}

fn spacing<T: Scalar>(nodes: &[T]) -> f64 {
    if nodes.len() < 2 {
        0.0
    } else {
        ((nodes[nodes.len() - 1] - nodes[0]) / T::from_usize(nodes.len() - 1).unwrap()).to_f64_lossy()
    }
}

/// Largest integral coefficient |a_k| at every grid node (all vanish on the level set).
pub fn conservation_report<T: Scalar>(grid: &PhaseGrid<T>, c_new: &Poly<T>, m: &Poly<T>) -> Result<ResidualReport> {
    let sys = StackelSystem::new(c_new.clone(), m.clone());
    let nx = grid.nx();
    let vals: Vec<f64> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            sys.integral_coefficients(p)
                .map(|a| a.max_abs().to_f64_lossy())
                .map_err(|e| e.at_node(k / nx, k % nx))
        })
        .collect::<Result<_>>()?;
    Ok(ResidualReport::from_values(
        "conservation",
        &vals,
        spacing(&grid.t_nodes),
        spacing(&grid.x_nodes),
    ))
}

/// Node-wise distance between Φˣ_H ∘ Φᵗ_F and Φᵗ_F ∘ Φˣ_H on a 5 × 5 grid
/// covering [0, t_span] × [0, x_span].
pub fn commutativity_report<T: Scalar>(
    start: &PhasePoint<T>,
    spans: (T, T),
    lambda: Lambda<T>,
    cfg: &FlowConfig<T>,
    c_new: &Poly<T>,
    m: &Poly<T>,
) -> Result<ResidualReport> {
    let sys = StackelSystem::new(c_new.clone(), m.clone());
    let nodes = |span: T| -> Vec<T> { (0..5).map(|i| span * T::from_usize(i).unwrap() / T::lit(4.0)).collect() };
    let (ts, xs) = (nodes(spans.0), nodes(spans.1));
    let build = |order| build_grid(&sys, start, &ts, &xs, lambda, cfg, GridMapping::default(), order);
    let (a, b) = rayon::join(|| build(GridOrder::XThenT), || build(GridOrder::TThenX));
    let (a, b) = (a?, b?);
    let vals: Vec<f64> = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| p.distance(q).to_f64_lossy())
        .collect();
    Ok(ResidualReport::from_values(
        "commutativity",
        &vals,
        spacing(&ts),
        spacing(&xs),
    ))
}

/// Max |q − ½ tr L(u)| over all nodes (the λ = ∞ constraint when m_n = 0).
pub fn trace_constraint<T: Scalar>(sol: &SolutionGrid<T>) -> f64 {
    let spec = &sol.meta.spec;
    (0..sol.q.len())
        .map(|k| (sol.q[k] - T::lit(0.5) * spec.trace_l(&sol.u_at(k / sol.nx(), k % sol.nx()))).abs())
        .fold(T::zero(), |a, b| a.max(b))
        .to_f64_lossy()
}
