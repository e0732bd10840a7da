//! Finite-dimensional reduction for BKM integrable PDE systems.
//!
//! Solutions u(t, x) of the n-component BKM systems are built from
//! trajectories of an N-degree-of-freedom Stäckel Hamiltonian system on
//! T*ℝᴺ: integrate the commuting flows of H (in x) and F_λ (in t), push the
//! orbit through the polynomial reconstruction map w ↦ u, then check the
//! result against the PDEs with finite-difference residuals.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the usual double-precision instantiation.

// NaN-rejecting comparisons such as `!(x > 0)` are intentional throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod flow;
pub mod linalg;
pub mod operator;
pub mod poly;
pub mod presets;
pub mod rho;
pub mod roots;
pub mod runner;
pub mod scalar;
pub mod scenario;
pub mod stackel;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{build_grid, flow, FlowConfig, FlowMethod, GridOrder, PhaseGrid};
pub use operator::{BkmSpec, Chart, CompanionMatrix, CompanionSign, Lambda};
pub use poly::Poly;
pub use rho::{map_r, rho_by_interpolation, solve_rho, RhoResult};
pub use scalar::Scalar;
pub use scenario::Scenario;
pub use stackel::{Generator, IntegralVector, PhasePoint, StackelSystem};
pub use synth::{closed_form_kb, synthesize, SolutionGrid};
pub use verify::{BkmResidual, ResidualReport};

pub type Poly64 = Poly<f64>;
pub type Poly32 = Poly<f32>;
pub type BkmSpec64 = BkmSpec<f64>;
pub type PhasePoint64 = PhasePoint<f64>;
pub type StackelSystem64 = StackelSystem<f64>;
pub type StackelSystem32 = StackelSystem<f32>;
pub type FlowConfig64 = FlowConfig<f64>;
pub type PhaseGrid64 = PhaseGrid<f64>;
pub type SolutionGrid64 = SolutionGrid<f64>;
