//! Deep optimal stopping: one small network per decision time, trained
//! backward over the decision grid to decide stop/continue from the
//! current state, for a fixed control policy.
//!
//! For decision time n the network's soft decision φ is trained to
//! maximize `mean(φ · P_n + (1 − φ) · P_{τ_{n+1}})`, where `P_n` is the
//! path's discounted payoff when stopped now (accumulated running cost
//! plus discounted reward) and `τ_{n+1}` the stopping step already chosen
//! by the later, hardened networks. After training, the decision hardens
//! to `φ ≥ 1/2` and the recursion moves one decision time earlier. The
//! final decision time always stops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{step_biology, ControlPolicy, FarmState, FeedingStrategy, ModelParams};
use crate::nn::{adam_step, AdamState, Activation, GradBuffer, Mlp, OutputTransform};
use crate::paths::PathBatch;
use crate::payoff::{running_cost, terminal_reward, EvalError, StoppingRule};
use crate::pinn::SamplingBox;

/// Training configuration for the stopping networks.
#[derive(Debug, Clone)]
pub struct DeepOsConfig {
    /// Decide every `stride`-th path step.
    pub stride: usize,
    pub hidden: Vec<usize>,
    /// Adam steps per decision time.
    pub steps_per_time: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Input normalization box.
    pub bounds: SamplingBox,
}

impl DeepOsConfig {
    pub fn paper(bounds: SamplingBox) -> Self {
        Self {
            stride: 16,
            hidden: vec![32, 32],
            steps_per_time: 500,
            minibatch: 4096,
            lr: 1e-3,
            seed: 0,
            bounds,
        }
    }

    pub fn desk(bounds: SamplingBox) -> Self {
        Self {
            stride: 64,
            steps_per_time: 300,
            minibatch: 2048,
            ..Self::paper(bounds)
        }
    }
}

/// Hardened stop/continue rule: one network per interior decision step,
/// forced stop at the final one.
#[derive(Debug, Clone)]
pub struct StoppingNetSet {
    nets: Vec<Mlp>,
    decision_steps: Vec<usize>,
}

impl StoppingNetSet {
    pub fn from_parts(nets: Vec<Mlp>, decision_steps: Vec<usize>) -> Self {
        assert_eq!(nets.len() + 1, decision_steps.len());
        Self { nets, decision_steps }
    }

    pub fn decision_steps(&self) -> &[usize] {
        &self.decision_steps
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    fn net_index(&self, step: usize) -> Option<usize> {
        match self.decision_steps.binary_search(&step) {
            Ok(pos) if pos + 1 == self.decision_steps.len() => None, // forced stop
            Ok(pos) => Some(pos),
            Err(_) => None,
        }
    }

    fn is_final(&self, step: usize) -> bool {
        Some(&step) == self.decision_steps.last()
    }
}

#[inline]
fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

impl StoppingRule for StoppingNetSet {
    fn stop(&self, step: usize, t: f64, state: &FarmState) -> bool {
        if self.is_final(step) {
            return true;
        }
        match self.net_index(step) {
            None => false,
            Some(idx) => {
                let y = self.nets[idx].value(&[t, state.w, state.h, state.p_f, state.p_b]);
                sigmoid(y) >= 0.5
            }
        }
    }

    fn stop_batch(&self, step: usize, t: f64, states: &[FarmState], out: &mut Vec<bool>) {
        out.clear();
        if self.is_final(step) {
            out.resize(states.len(), true);
            return;
        }
        match self.net_index(step) {
            None => out.resize(states.len(), false),
            Some(idx) => {
                let points: Vec<[f64; 5]> =
                    states.iter().map(|s| [t, s.w, s.h, s.p_f, s.p_b]).collect();
                let values = self.nets[idx].value_batch(&points);
                out.extend(values.into_iter().map(|y| sigmoid(y) >= 0.5));
            }
        }
    }
}

/// Per-path stop payoffs and states at the decision steps, and the mean
/// stop payoff at every grid step (the fixed-time scan).
pub struct PathTable {
    pub decision_steps: Vec<usize>,
    n_paths: usize,
    /// `(t, w, h, pF, pB)` per (path, decision), path-major.
    inputs: Vec<[f64; 5]>,
    /// Discounted payoff when stopping at that decision, path-major.
    payoffs: Vec<f64>,
    /// Mean stop payoff per grid step over all paths.
    pub step_means: Vec<f64>,
}

impl PathTable {
    #[inline]
    fn row(&self, path: usize, dec: usize) -> usize {
        path * self.decision_steps.len() + dec
    }

    pub fn payoff(&self, path: usize, dec: usize) -> f64 {
        self.payoffs[self.row(path, dec)]
    }
}

/// Integrates every path under `policy` and tabulates stop payoffs.
pub fn build_path_table(
    paths: &PathBatch,
    policy: &dyn ControlPolicy,
    p: &ModelParams,
    s: &FeedingStrategy,
    stride: usize,
) -> Result<PathTable, EvalError> {
    assert!(stride >= 1);
    let n_paths = paths.n_paths;
    let n_steps = paths.n_steps;
    let dt = paths.dt;
    let decision_steps: Vec<usize> = (0..=n_steps)
        .filter(|&n| n % stride == 0 || n == n_steps)
        .collect();
    let n_dec = decision_steps.len();

    let mut inputs = vec![[0.0; 5]; n_paths * n_dec];
    let mut payoffs = vec![0.0; n_paths * n_dec];
    let mut step_means = vec![0.0; n_steps + 1];

    let mut states: Vec<FarmState> = (0..n_paths)
        .map(|path| FarmState {
            w: p.w0,
            h: p.h0,
            p_f: paths.price_f(path, 0),
            p_b: paths.price_b(path, 0),
        })
        .collect();
    let mut costs = vec![0.0f64; n_paths];
    let mut controls: Vec<f64> = Vec::with_capacity(n_paths);
    let mut dec_idx = 0usize;

    for step in 0..=n_steps {
        let t = paths.time(step);
        let disc = (-p.r * t).exp();
        for (path, st) in states.iter_mut().enumerate() {
            st.p_f = paths.price_f(path, step);
            st.p_b = paths.price_b(path, step);
            if !st.is_finite() {
                return Err(EvalError::NonFiniteState { t, path });
            }
        }
        let is_decision = dec_idx < n_dec && decision_steps[dec_idx] == step;
        let mut mean_acc = 0.0;
        for (path, st) in states.iter().enumerate() {
            let stop_payoff = costs[path] + disc * terminal_reward(st);
            mean_acc += stop_payoff;
            if is_decision {
                let row = path * n_dec + dec_idx;
                inputs[row] = [t, st.w, st.h, st.p_f, st.p_b];
                payoffs[row] = stop_payoff;
            }
        }
        step_means[step] = mean_acc / n_paths as f64;
        if is_decision {
            dec_idx += 1;
        }
        if step == n_steps {
            break;
        }
        policy.control_batch(t, &states, &mut controls);
        let f = s.rate(t);
        for (path, st) in states.iter_mut().enumerate() {
            let u = controls[path];
            if !(u.is_finite() && (-1e-9..=p.u_bar + 1e-9).contains(&u)) {
                return Err(EvalError::ControlOutOfBounds {
                    control: u,
                    u_bar: p.u_bar,
                    t,
                    path,
                });
            }
            costs[path] += disc * running_cost(st, u) * dt;
            let (w, h) = step_biology(st.w, st.h, f, u, dt, p);
            st.w = w;
            st.h = h;
        }
    }

    Ok(PathTable {
        decision_steps,
        n_paths,
        inputs,
        payoffs,
        step_means,
    })
}

/// Trained rule plus in-sample diagnostics.
pub struct DeepOsTrained {
    pub rule: StoppingNetSet,
    /// Mean payoff of the hardened rule on the training batch.
    pub train_value: f64,
    /// Best fixed-time value on the training batch and its step.
    pub best_fixed_value: f64,
    pub best_fixed_step: usize,
    /// Whether the learned rule beats every fixed time in sample.
    pub improved: bool,
}

const GRAD_CHUNK: usize = 256;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Backward recursion over the decision times.
pub fn train_deepos(
    paths: &PathBatch,
    policy: &dyn ControlPolicy,
    p: &ModelParams,
    s: &FeedingStrategy,
    cfg: &DeepOsConfig,
) -> Result<DeepOsTrained, EvalError> {
    let table = build_path_table(paths, policy, p, s, cfg.stride)?;
    train_deepos_on_table(&table, cfg)
}

/// The recursion itself, reusable when the path table is already built.
pub fn train_deepos_on_table(table: &PathTable, cfg: &DeepOsConfig) -> Result<DeepOsTrained, EvalError> {
    let n_dec = table.decision_steps.len();
    let n_paths = table.n_paths;
    let mut widths = vec![5];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);

    // payoff realized by the already-hardened later decisions
    let mut cont_payoff: Vec<f64> = (0..n_paths)
        .map(|path| table.payoffs[table.row(path, n_dec - 1)])
        .collect();
    let mut nets: Vec<Option<Mlp>> = vec![None; n_dec - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1_000_000));

    for dec in (0..n_dec - 1).rev() {
        let mut net = Mlp::new(
            &widths,
            Activation::Relu,
            OutputTransform::Identity,
            &cfg.bounds.lo,
            &cfg.bounds.hi,
            derive_seed(cfg.seed, dec as u64),
        );
        let mut state = AdamState::new(&net);
        for _ in 0..cfg.steps_per_time {
            let batch_idx: Vec<usize> =
                (0..cfg.minibatch).map(|_| rng.gen_range(0..n_paths)).collect();
            let net_ref = &net;
            let parts: Vec<GradBuffer> = batch_idx
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut local = GradBuffer::zeros_like(net_ref);
                    for &path in chunk {
                        let row = table.row(path, dec);
                        let gain = table.payoffs[row] - cont_payoff[path];
                        let x = &table.inputs[row];
                        let phi = sigmoid(net_ref.value(x));
                        // maximize mean(φ · gain): upstream on the raw output
                        let upstream = -gain * phi * (1.0 - phi) / cfg.minibatch as f64;
                        net_ref.backprop_value(x, upstream, &mut local);
                    }
                    local
                })
                .collect();
            let mut grads = GradBuffer::zeros_like(&net);
            for part in &parts {
                grads.add_assign(part);
            }
            adam_step(&mut net, &grads, &mut state, cfg.lr);
        }
        // harden and roll the continuation payoff backward
        let inputs: Vec<[f64; 5]> =
            (0..n_paths).map(|path| table.inputs[table.row(path, dec)]).collect();
        let raw = net.value_batch(&inputs);
        for (path, y) in raw.into_iter().enumerate() {
            if sigmoid(y) >= 0.5 {
                cont_payoff[path] = table.payoffs[table.row(path, dec)];
            }
        }
        nets[dec] = Some(net);
    }

    let train_value = cont_payoff.iter().sum::<f64>() / n_paths as f64;
    let (best_fixed_step, best_fixed_value) = table
        .step_means
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (i, v))
        .unwrap();

    Ok(DeepOsTrained {
        rule: StoppingNetSet::from_parts(
            nets.into_iter().map(Option::unwrap).collect(),
            table.decision_steps.clone(),
        ),
        train_value,
        best_fixed_value,
        best_fixed_step,
        improved: train_value >= best_fixed_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BiologicalControl;
    use crate::payoff::{evaluate_farm_value, StopAtStep};
    use approx::assert_abs_diff_eq;

    fn bounds(p: &ModelParams) -> SamplingBox {
        SamplingBox {
            lo: [0.0, 0.005, 0.1, 0.0019, 0.0055],
            hi: [p.horizon, 3.3, 1.1, 0.3856, 0.2635],
        }
    }

    #[test]
    fn path_table_matches_fixed_step_evaluation() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let batch = PathBatch::simulate(&p, 64, 128, 5);
        let policy = BiologicalControl(s.clone());
        let table = build_path_table(&batch, &policy, &p, &s, 16).unwrap();
        for (dec, &step) in table.decision_steps.iter().enumerate() {
            let rep = evaluate_farm_value(&batch, &policy, &StopAtStep(step), &p, &s).unwrap();
            for path in 0..batch.n_paths {
                assert_abs_diff_eq!(table.payoff(path, dec), rep.per_path[path], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(table.step_means[step], rep.mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_prices_recover_the_best_fixed_time() {
        // with zero volatility every path is identical: the optimal rule
        // is a fixed decision time and the learned value must match the
        // scan over the decision grid
        let mut p = ModelParams::baseline();
        p.sigma_f = 1e-300;
        p.sigma_b = 1e-300;
        let s = FeedingStrategy::linear_baseline();
        let batch = PathBatch::simulate(&p, 32, 512, 7);
        let policy = BiologicalControl(s.clone());
        let mut cfg = DeepOsConfig::desk(bounds(&p));
        cfg.stride = 16;
        cfg.minibatch = 32;
        cfg.steps_per_time = 150;
        cfg.seed = 11;
        let table = build_path_table(&batch, &policy, &p, &s, cfg.stride).unwrap();
        let trained = train_deepos_on_table(&table, &cfg).unwrap();
        let best_on_grid = table
            .decision_steps
            .iter()
            .map(|&n| table.step_means[n])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (trained.train_value - best_on_grid).abs() <= 1e-3,
            "learned {} vs best grid fixed time {}",
            trained.train_value,
            best_on_grid
        );
    }

    #[test]
    fn rule_always_stops_by_the_horizon_and_on_the_decision_grid() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let batch = PathBatch::simulate(&p, 128, 256, 9);
        let policy = BiologicalControl(s.clone());
        let mut cfg = DeepOsConfig::desk(bounds(&p));
        cfg.stride = 32;
        cfg.minibatch = 128;
        cfg.steps_per_time = 60;
        let trained = train_deepos(&batch, &policy, &p, &s, &cfg).unwrap();
        let rep = evaluate_farm_value(&batch, &policy, &trained.rule, &p, &s).unwrap();
        assert!(rep.stop_steps.iter().all(|&n| n <= batch.n_steps));
        assert!(rep.mean_stop_time >= 0.0 && rep.mean_stop_time <= p.horizon);
        for &stop in &rep.stop_steps {
            assert!(trained.rule.decision_steps().binary_search(&stop).is_ok());
        }
    }

    #[test]
    fn evaluator_reproduces_the_hardened_training_value() {
        // the rule's decisions during evaluation replay exactly the
        // decisions hardened in the recursion (same integrator, same
        // policy), so the evaluator's mean equals the training value
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let batch = PathBatch::simulate(&p, 256, 128, 21);
        let policy = BiologicalControl(s.clone());
        let mut cfg = DeepOsConfig::desk(bounds(&p));
        cfg.stride = 16;
        cfg.minibatch = 256;
        cfg.steps_per_time = 40;
        let trained = train_deepos(&batch, &policy, &p, &s, &cfg).unwrap();
        let rep = evaluate_farm_value(&batch, &policy, &trained.rule, &p, &s).unwrap();
        assert_abs_diff_eq!(rep.mean, trained.train_value, epsilon = 1e-10);
    }
}
