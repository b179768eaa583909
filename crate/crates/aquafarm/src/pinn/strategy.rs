//! Policies and the threshold stopping rule backed by trained networks.

use super::feedback::feedback_control;
use super::residual::Point;
use super::train::{ControlApproach, PinnSolution};
use crate::model::{ControlPolicy, FarmState, FeedingStrategy, ModelParams};
use crate::payoff::{terminal_reward, StoppingRule};
use crate::nn::Mlp;

fn to_point(t: f64, state: &FarmState) -> Point {
    [t, state.w, state.h, state.p_f, state.p_b]
}

/// Closed-form feedback control evaluated on the value network.
pub struct FeedbackPolicy<'a> {
    net: &'a Mlp,
    params: &'a ModelParams,
    feeding: &'a FeedingStrategy,
}

impl ControlPolicy for FeedbackPolicy<'_> {
    fn control(&self, t: f64, state: &FarmState) -> f64 {
        let jet = self.net.jet(&to_point(t, state)).expect("value net supports jets");
        feedback_control(jet.grad[1], jet.grad[2], t, state, self.feeding, self.params)
    }

    fn control_batch(&self, t: f64, states: &[FarmState], out: &mut Vec<f64>) {
        let points: Vec<Point> = states.iter().map(|s| to_point(t, s)).collect();
        let jets = self.net.jet_batch(&points).expect("value net supports jets");
        out.clear();
        out.extend(states.iter().zip(jets.iter()).map(|(state, jet)| {
            feedback_control(jet.grad[1], jet.grad[2], t, state, self.feeding, self.params)
        }));
    }
}

/// Direct control-network policy, clamped to the admissible interval.
pub struct ControlNetPolicy<'a> {
    net: &'a Mlp,
    u_bar: f64,
}

impl ControlPolicy for ControlNetPolicy<'_> {
    fn control(&self, t: f64, state: &FarmState) -> f64 {
        self.net.value(&to_point(t, state)).min(self.u_bar)
    }

    fn control_batch(&self, t: f64, states: &[FarmState], out: &mut Vec<f64>) {
        let points: Vec<Point> = states.iter().map(|s| to_point(t, s)).collect();
        let values = self.net.value_batch(&points);
        out.clear();
        out.extend(values.into_iter().map(|v| v.min(self.u_bar)));
    }
}

/// Either control source as a policy.
pub enum PinnPolicy<'a> {
    Feedback(FeedbackPolicy<'a>),
    Net(ControlNetPolicy<'a>),
}

impl ControlPolicy for PinnPolicy<'_> {
    fn control(&self, t: f64, state: &FarmState) -> f64 {
        match self {
            Self::Feedback(p) => p.control(t, state),
            Self::Net(p) => p.control(t, state),
        }
    }

    fn control_batch(&self, t: f64, states: &[FarmState], out: &mut Vec<f64>) {
        match self {
            Self::Feedback(p) => p.control_batch(t, states, out),
            Self::Net(p) => p.control_batch(t, states, out),
        }
    }
}

/// Harvests once the network value drops to the exercise value plus a
/// tolerance; always fires at the horizon.
pub struct PinnThresholdStop<'a> {
    net: &'a Mlp,
    epsilon: f64,
    horizon: f64,
}

impl StoppingRule for PinnThresholdStop<'_> {
    fn stop(&self, _step: usize, t: f64, state: &FarmState) -> bool {
        if t >= self.horizon {
            return true;
        }
        self.net.value(&to_point(t, state)) <= terminal_reward(state) + self.epsilon
    }

    fn stop_batch(&self, _step: usize, t: f64, states: &[FarmState], out: &mut Vec<bool>) {
        out.clear();
        if t >= self.horizon {
            out.extend(states.iter().map(|_| true));
            return;
        }
        let points: Vec<Point> = states.iter().map(|s| to_point(t, s)).collect();
        let values = self.net.value_batch(&points);
        out.extend(
            states
                .iter()
                .zip(values.iter())
                .map(|(state, &v)| v <= terminal_reward(state) + self.epsilon),
        );
    }
}

impl PinnSolution {
    /// The control policy matching the trained approach.
    pub fn policy<'a>(&'a self, p: &'a ModelParams, s: &'a FeedingStrategy) -> PinnPolicy<'a> {
        match self.approach {
            ControlApproach::Feedback => PinnPolicy::Feedback(FeedbackPolicy {
                net: &self.value_net,
                params: p,
                feeding: s,
            }),
            _ => PinnPolicy::Net(ControlNetPolicy {
                net: self.control_net.as_ref().expect("network-control approach"),
                u_bar: p.u_bar,
            }),
        }
    }

    /// Value-threshold stopping rule with the configured tolerance.
    pub fn threshold_stopping<'a>(&'a self, p: &ModelParams) -> PinnThresholdStop<'a> {
        self.threshold_stopping_with(p, self.stop_eps)
    }

    pub fn threshold_stopping_with<'a>(&'a self, p: &ModelParams, epsilon: f64) -> PinnThresholdStop<'a> {
        PinnThresholdStop {
            net: &self.value_net,
            epsilon,
            horizon: p.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, OutputTransform};
    use crate::pinn::sampling::SamplingBox;

    fn dummy_solution(approach: ControlApproach, p: &ModelParams) -> PinnSolution {
        let bounds = SamplingBox {
            lo: [0.0, 0.005, 0.1, 0.0019, 0.0055],
            hi: [p.horizon, 3.3, 1.1, 0.3856, 0.2635],
        };
        let value_net = Mlp::new(
            &[5, 8, 1],
            Activation::Tanh,
            OutputTransform::Identity,
            &bounds.lo,
            &bounds.hi,
            1,
        );
        let control_net = Mlp::new(
            &[5, 8, 1],
            Activation::Relu,
            OutputTransform::Abs,
            &bounds.lo,
            &bounds.hi,
            2,
        );
        PinnSolution {
            approach,
            value_net,
            control_net: Some(control_net),
            bounds,
            stop_eps: 0.01,
            loss_history: Vec::new(),
        }
    }

    #[test]
    fn threshold_rule_fires_at_horizon() {
        let p = ModelParams::baseline();
        let sol = dummy_solution(ControlApproach::Feedback, &p);
        let rule = sol.threshold_stopping(&p);
        let st = FarmState::initial(&p);
        assert!(rule.stop(0, p.horizon, &st));
        assert!(rule.stop(0, p.horizon + 1.0, &st));
    }

    #[test]
    fn policies_stay_in_the_admissible_interval() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        for approach in [ControlApproach::Feedback, ControlApproach::MeanError] {
            let sol = dummy_solution(approach, &p);
            let policy = sol.policy(&p, &s);
            for t in [0.0, 1.3, 2.9] {
                for w in [0.01, 0.8, 2.5] {
                    let st = FarmState {
                        w,
                        h: 0.7,
                        p_f: 0.08,
                        p_b: 0.13,
                    };
                    let u = policy.control(t, &st);
                    assert!((0.0..=p.u_bar).contains(&u), "u={u} outside [0, u_bar]");
                }
            }
        }
    }

    #[test]
    fn batch_and_scalar_policies_agree() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let sol = dummy_solution(ControlApproach::Feedback, &p);
        let policy = sol.policy(&p, &s);
        let states: Vec<FarmState> = (0..8)
            .map(|k| FarmState {
                w: 0.1 + 0.3 * k as f64,
                h: 0.5 + 0.05 * k as f64,
                p_f: 0.07,
                p_b: 0.11,
            })
            .collect();
        let mut batch = Vec::new();
        policy.control_batch(1.0, &states, &mut batch);
        for (st, &u) in states.iter().zip(batch.iter()) {
            assert_eq!(u, policy.control(1.0, st));
        }
    }
}
