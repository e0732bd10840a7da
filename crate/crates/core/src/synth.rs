//! Conversion of phase grids into BKM solutions u(t, x), q(t, x).
//!
//! For finite λ the t-flow runs at rescaled time and q = w(λ)/a with
//! a = √c_new(λ). For λ = ∞ the x-argument is shifted by −(c₁/2)t and
//! q = w₁ − c₁/2, where c₁ is the μ^{2N+n−1} coefficient of c_new.

use crate::error::{Error, Result};
use crate::flow::{build_grid, FlowConfig, GridMapping, GridOrder, PhaseGrid};
use crate::operator::{BkmSpec, Lambda};
use crate::poly::Poly;
use crate::rho::solve_rho;
use crate::scalar::Scalar;
use crate::stackel::{PhasePoint, StackelSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Descriptive data attached to a synthesized grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SolutionMeta<T> {
    pub spec: BkmSpec<T>,
    /// Reduction degree N.
    pub big_n: usize,
    pub c: Poly<T>,
    pub c_new: Poly<T>,
    /// a = √c_new(λ) for finite λ.
    pub a: Option<T>,
    /// Flow time per unit of physical time t.
    pub time_scale: T,
    /// x-argument shift per unit t (λ = ∞ only).
    pub x_shift_per_t: T,
}

/// Sampled fields on a rectangular (t, x) grid, row-major in t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SolutionGrid<T> {
    pub t_nodes: Vec<T>,
    pub x_nodes: Vec<T>,
    /// `u[i][ti * nx + xi]` is u_{i+1}(t, x).
    pub u: Vec<Vec<T>>,
    pub q: Vec<T>,
    pub meta: SolutionMeta<T>,
}

impl<T: Scalar> SolutionGrid<T> {
    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn idx(&self, ti: usize, xi: usize) -> usize {
        ti * self.nx() + xi
    }

    /// u-vector at a node.
    pub fn u_at(&self, ti: usize, xi: usize) -> Vec<T> {
        let k = self.idx(ti, xi);
        self.u.iter().map(|f| f[k]).collect()
    }

    pub fn q_at(&self, ti: usize, xi: usize) -> T {
        self.q[self.idx(ti, xi)]
    }
}

/// Maps physical (t, x) to flow parameters for the given spec and c_new.
pub fn grid_mapping<T: Scalar>(spec: &BkmSpec<T>, c_new: &Poly<T>) -> Result<(GridMapping<T>, Option<T>)> {
    match spec.lambda {
        Lambda::Finite(l) => {
            let cl = c_new.eval(l);
            if !(cl > T::zero()) {
                return Err(Error::NonpositiveCLambda {
                    value: cl.to_f64_lossy(),
                });
            }
            let a = cl.sqrt();
            Ok((
                GridMapping {
                    time_scale: finite_time_scale(a),
                    x_shift_per_t: T::zero(),
                },
                Some(a),
            ))
        }
        Lambda::Infinity => Ok((
            GridMapping {
                time_scale: T::one(),
                x_shift_per_t: c1_of(c_new) / T::lit(2.0),
            },
            None,
        )),
    }
}

/// Flow time of F_λ per unit physical time, for finite λ.
///
/// Writing u(t, x) = 𝓡(w(τ, x)) with τ = t/a makes the BKM evolution and
/// constraint hold exactly when q = w(λ)/a (checked by the finite-λ residual tests).
fn finite_time_scale<T: Scalar>(a: T) -> T {
    T::one() / a
}

/// Second-highest coefficient of c.
pub fn c1_of<T: Scalar>(c: &Poly<T>) -> T {
    let d = c.degree();
    if d == 0 {
        T::zero()
    } else {
        c.coeff(d - 1)
    }
}

/// Applies the reconstruction map and the q-formula to every node of `grid`.
pub fn synthesize_from_grid<T: Scalar>(
    spec: &BkmSpec<T>,
    c: &Poly<T>,
    c_new: &Poly<T>,
    grid: &PhaseGrid<T>,
) -> Result<SolutionGrid<T>> {
    let big_n = grid.points[0].dim();
    let (mapping, a) = grid_mapping(spec, c_new)?;
    let nx = grid.nx();
    let c1_half = c1_of(c_new) / T::lit(2.0);
    let nodes: Vec<(Vec<T>, T)> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let r = solve_rho(c_new, &spec.m, &p.w).map_err(|e| e.at_node(k / nx, k % nx))?;
            if r.rho.degree() != spec.n {
                return Err(Error::InvalidInput(format!(
                    "deg c − 2N = {} does not match n = {}",
                    r.rho.degree(),
                    spec.n
                )));
            }
            let u = spec.chart.u_from_sigma(&r.sigma_tail());
            let q = match (spec.lambda, a) {
                (Lambda::Finite(l), Some(a)) => p.w_poly().eval(l) / a,
                _ => p.w[0] - c1_half,
            };
            Ok((u, q))
        })
        .collect::<Result<_>>()?;
    let mut u = vec![Vec::with_capacity(nodes.len()); spec.n];
    let mut q = Vec::with_capacity(nodes.len());
    for (uv, qv) in nodes {
        for (f, v) in u.iter_mut().zip(uv) {
            f.push(v);
        }
        q.push(qv);
    }
    Ok(SolutionGrid {
        t_nodes: grid.t_nodes.clone(),
        x_nodes: grid.x_nodes.clone(),
        u,
        q,
        meta: SolutionMeta {
            spec: spec.clone(),
            big_n,
            c: c.clone(),
            c_new: c_new.clone(),
            a,
            time_scale: mapping.time_scale,
            x_shift_per_t: mapping.x_shift_per_t,
        },
    })
}

/// Output of the full pipeline up to synthesis.
#[derive(Clone, Debug)]
pub struct Synthesis<T> {
    pub c_new: Poly<T>,
    pub grid: PhaseGrid<T>,
    pub solution: SolutionGrid<T>,
}

/// repairC → buildGrid → reconstruction, for either kind of λ.
pub fn synthesize<T: Scalar>(
    spec: &BkmSpec<T>,
    c: &Poly<T>,
    start: &PhasePoint<T>,
    t_nodes: &[T],
    x_nodes: &[T],
    cfg: &FlowConfig<T>,
    order: GridOrder,
) -> Result<Synthesis<T>> {
    spec.validate()?;
    let big_n = start.dim();
    if c.degree() != 2 * big_n + spec.n {
        return Err(Error::InvalidInput(format!(
            "deg c = {} but 2N + n = {}",
            c.degree(),
            2 * big_n + spec.n
        )));
    }
    let c_new = StackelSystem::new(c.clone(), spec.m.clone()).repair_c(start)?;
    let (mapping, _) = grid_mapping(spec, &c_new)?;
    let sys = StackelSystem::new(c_new.clone(), spec.m.clone());
    let grid = build_grid(&sys, start, t_nodes, x_nodes, spec.lambda, cfg, mapping, order)?;
    let solution = synthesize_from_grid(spec, c, &c_new, &grid)?;
    Ok(Synthesis {
        c_new,
        grid,
        solution,
    })
}

/// Pipeline for finite λ; rejects λ = ∞.
pub fn synthesize_finite<T: Scalar>(
    spec: &BkmSpec<T>,
    c: &Poly<T>,
    start: &PhasePoint<T>,
    t_nodes: &[T],
    x_nodes: &[T],
    cfg: &FlowConfig<T>,
) -> Result<Synthesis<T>> {
    if spec.lambda.is_infinite() {
        return Err(Error::InvalidInput("expected finite lambda".into()));
    }
    synthesize(spec, c, start, t_nodes, x_nodes, cfg, GridOrder::XThenT)
}

/// Pipeline for λ = ∞; rejects finite λ.
pub fn synthesize_infinite<T: Scalar>(
    spec: &BkmSpec<T>,
    c: &Poly<T>,
    start: &PhasePoint<T>,
    t_nodes: &[T],
    x_nodes: &[T],
    cfg: &FlowConfig<T>,
) -> Result<Synthesis<T>> {
    if !spec.lambda.is_infinite() {
        return Err(Error::InvalidInput("expected lambda = inf".into()));
    }
    synthesize(spec, c, start, t_nodes, x_nodes, cfg, GridOrder::XThenT)
}

/// Closed-form soliton of the two-component Kaup–Boussinesq system for
/// c(μ) = (μ − 1)²μ²(μ + 1)²: returns (q₁, q₂, u₁, u₂) at (t, x).
pub fn closed_form_kb<T: Scalar>(t: T, x: T) -> (T, T, T, T) {
    let s = T::lit(std::f64::consts::SQRT_2);
    let two = T::lit(2.0);
    let a = (s * (x - t)).exp();
    let b = (-s * (x + t)).exp();
    let c = (two * s * x).exp();
    let q1 = (b - a) / (a + b + two);
    let q2 = (c - T::one()) / (two * a + c + T::one());
    let u1 = two * q1 + two * q2;
    let u2 = T::lit(3.0) * q1 * q1 + T::lit(4.0) * q1 * q2 + T::lit(3.0) * q2 * q2 - two;
    (q1, q2, u1, u2)
}
