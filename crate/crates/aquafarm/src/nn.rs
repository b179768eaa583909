//! From-scratch feedforward network stack: forward evaluation, analytic
//! input derivatives, loss-specific backpropagation, and Adam.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, lr_schedule, AdamState};
pub use mlp::{Activation, GradBuffer, Jet, Mlp, NnError, OutputTransform};
pub(crate) use mlp::{JetAdjoint, JetWorkspace};
