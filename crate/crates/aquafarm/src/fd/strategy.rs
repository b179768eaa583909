//! Control policies and stopping rules backed by a solved field.

use rayon::prelude::*;

use super::solver::FdSolution;
use crate::model::{ControlPolicy, FarmState};
use crate::payoff::{terminal_reward, StoppingRule};

/// Feedback control read from the solved policy field by interpolation.
pub struct FdPolicy<'a> {
    sol: &'a FdSolution,
}

impl<'a> FdPolicy<'a> {
    pub fn new(sol: &'a FdSolution) -> Self {
        Self { sol }
    }
}

impl ControlPolicy for FdPolicy<'_> {
    fn control(&self, t: f64, state: &FarmState) -> f64 {
        let u = self.sol.policy_at(t, state);
        u.clamp(self.sol.grid.control.lo, self.sol.grid.control.hi)
    }

    fn control_batch(&self, t: f64, states: &[FarmState], out: &mut Vec<f64>) {
        out.clear();
        states
            .par_iter()
            .map(|s| self.control(t, s))
            .collect_into_vec(out);
    }
}

/// Harvests once the interpolated value field drops to the exercise value:
/// fires at the first time with `V(t, x) ≤ g(x) + ε`.
pub struct FdThresholdStop<'a> {
    sol: &'a FdSolution,
    epsilon: f64,
}

impl<'a> FdThresholdStop<'a> {
    pub fn new(sol: &'a FdSolution, epsilon: f64) -> Self {
        Self { sol, epsilon }
    }
}

impl StoppingRule for FdThresholdStop<'_> {
    fn stop(&self, _step: usize, t: f64, state: &FarmState) -> bool {
        if t >= self.sol.horizon {
            return true;
        }
        self.sol.value_at(t, state) <= terminal_reward(state) + self.epsilon
    }

    fn stop_batch(&self, step: usize, t: f64, states: &[FarmState], out: &mut Vec<bool>) {
        out.clear();
        states
            .par_iter()
            .map(|s| self.stop(step, t, s))
            .collect_into_vec(out);
    }
}

impl FdSolution {
    pub fn policy(&self) -> FdPolicy<'_> {
        FdPolicy::new(self)
    }

    pub fn threshold_stopping(&self, epsilon: f64) -> FdThresholdStop<'_> {
        FdThresholdStop::new(self, epsilon)
    }
}
