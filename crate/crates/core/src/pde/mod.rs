//! PDE and stochastic-control oracles for the recursion.

pub mod control;
pub mod convexity;
pub mod hopf_cole;
pub mod solver;

pub use hopf_cole::{compose_segments, hopf_cole_segment, Field};
pub use solver::{solve_pde_1d, GridSpec, PdeSolution};
pub use control::{simulate_control_value, ControlConfig, ControlPolicy};
pub use convexity::{convexity_probe, ConvexityReport};
