//! Explicit upwind finite-difference solver for the joint control and
//! stopping problem, with interpolators and solution-backed strategies.

mod grid;
mod interp;
mod io;
mod solver;
mod strategy;

pub use grid::{AxisSpec, GridSpec};
pub use solver::{
    solve, stability_check, step_backward, stencil_weights, terminal_slice, FdError, FdSolution,
    SolveMode, SolveOptions, StabilityReport, StencilWeights,
};
pub use strategy::{FdPolicy, FdThresholdStop};
