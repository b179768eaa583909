//! Free-boundary training of the value function with physics-informed
//! networks, the three control-approximation approaches, and the
//! value-threshold stopping rule.

mod feedback;
mod residual;
mod sampling;
mod strategy;
mod train;

pub use feedback::{feedback_control, hamiltonian_control_part, DENOMINATOR_FLOOR};
pub use residual::{
    exercise_value, generator_plus_cost, manufactured_jet, manufactured_residual, pde_residual_at,
    pde_residual_batch, Point,
};
pub use sampling::{sample_regions, Regions, SamplingBox, SamplingError};
pub use strategy::{ControlNetPolicy, FeedbackPolicy, PinnPolicy, PinnThresholdStop};
pub use train::{
    accumulate_pde_gradients, control_loss_hinge, control_loss_mean_error, train_value,
    ControlApproach, LossRecord, PinnConfig, PinnSolution, TrainError,
};
