//! Joint feeding-control and harvest-timing optimization for a stochastic
//! fish-farm model.
//!
//! The farm operator chooses a feeding rate `u_t` (deviating from the
//! biological schedule `f_t` costs growth and survival) and a harvest time
//! `τ` to maximize the expected discounted profit
//! `E[∫₀^τ e^{−rs} (−h u pF) ds + e^{−rτ} w h pB]`
//! under geometric Brownian feed and biomass prices.
//!
//! Three solvers are provided and evaluated pathwise on one shared
//! Monte-Carlo path set:
//!
//! * [`fd`] — explicit upwind finite differences for the dynamic-programming
//!   variational inequality on the full `(t, w, h, pF, pB)` grid;
//! * [`pinn`] — a physics-informed network for the equivalent free-boundary
//!   problem, with three ways of producing the control (closed-form
//!   feedback, and two trained control networks);
//! * [`deepos`] — deep optimal stopping, trained backward over decision
//!   times on simulated paths, used both as a benchmark and to refine the
//!   network solver's stopping rule.
//!
//! See the `examples/` directory for one runnable entry point per
//! capability, and the `aquafarm` binary for the batch CLI.

pub mod deepos;
pub mod experiments;
pub mod fd;
pub mod model;
pub mod nn;
pub mod paths;
pub mod payoff;
pub mod pinn;

pub use model::{FarmState, FeedingStrategy, ModelParams};
pub use paths::PathBatch;
pub use payoff::{evaluate_farm_value, EvaluationReport};
