//! Cost, reward, and the pathwise Monte-Carlo evaluation of the farm value
//! functional for an arbitrary (control policy, stopping rule) pair.
//!
//! All strategies are evaluated on the same [`PathBatch`] so comparisons
//! are pathwise (common random numbers): differences between two reports
//! on the same batch carry no independent Monte-Carlo noise.

use thiserror::Error;

use crate::model::{step_biology, ControlPolicy, FarmState, FeedingStrategy, ModelParams};
use crate::paths::PathBatch;

/// Instantaneous feeding cost `k = −h · u · pF`.
#[inline]
pub fn running_cost(state: &FarmState, control: f64) -> f64 {
    -state.h * control * state.p_f
}

/// Harvest reward `g = w · h · pB`.
#[inline]
pub fn terminal_reward(state: &FarmState) -> f64 {
    state.w * state.h * state.p_b
}

/// Stopping rules decide at each grid step whether to harvest now.
/// The evaluator forces a stop at the final step regardless.
pub trait StoppingRule: Sync {
    fn stop(&self, step: usize, t: f64, state: &FarmState) -> bool;

    fn stop_batch(&self, step: usize, t: f64, states: &[FarmState], out: &mut Vec<bool>) {
        out.clear();
        out.extend(states.iter().map(|s| self.stop(step, t, s)));
    }
}

/// Stop at a fixed grid step (`τ⁰`, `τ¹` style benchmarks).
pub struct StopAtStep(pub usize);

impl StoppingRule for StopAtStep {
    fn stop(&self, step: usize, _t: f64, _state: &FarmState) -> bool {
        step >= self.0
    }
}

/// Never stop before the horizon.
pub struct StopAtHorizon;

impl StoppingRule for StopAtHorizon {
    fn stop(&self, _step: usize, _t: f64, _state: &FarmState) -> bool {
        false
    }
}

/// Outcome of a pathwise evaluation.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    /// Discounted value realized on each path.
    pub per_path: Vec<f64>,
    /// Stopping step of each path.
    pub stop_steps: Vec<usize>,
    pub mean: f64,
    /// Sample standard deviation of the per-path values divided by √n.
    pub stderr: f64,
    pub mean_stop_time: f64,
}

impl EvaluationReport {
    fn from_samples(per_path: Vec<f64>, stop_steps: Vec<usize>, dt: f64) -> Self {
        let n = per_path.len() as f64;
        let mean = per_path.iter().sum::<f64>() / n;
        let var = per_path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        let mean_stop_time = stop_steps.iter().map(|&s| s as f64 * dt).sum::<f64>() / n;
        Self {
            per_path,
            stop_steps,
            mean,
            stderr,
            mean_stop_time,
        }
    }

    /// Mean and stderr of the pathwise difference `self − other` under
    /// common random numbers.
    pub fn paired_diff(&self, other: &EvaluationReport) -> (f64, f64) {
        assert_eq!(self.per_path.len(), other.per_path.len());
        let diffs: Vec<f64> = self
            .per_path
            .iter()
            .zip(&other.per_path)
            .map(|(a, b)| a - b)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("control {control} outside [0, {u_bar}] at t={t} (path {path})")]
    ControlOutOfBounds {
        control: f64,
        u_bar: f64,
        t: f64,
        path: usize,
    },
    #[error("non-finite state at t={t} (path {path})")]
    NonFiniteState { t: f64, path: usize },
}

/// Evaluates the discounted farm value of `(policy, rule)` on every path.
///
/// Per path the biological state is advanced by explicit Euler along the
/// path's prices; the running cost is accumulated with a left Riemann sum
/// `Σ e^{−r t_n} k(t_n) Δt` over the steps before the stop fires, and the
/// discounted reward `e^{−r τ} g(τ)` is added at the stop. The stop is
/// forced at the final step.
pub fn evaluate_farm_value(
    paths: &PathBatch,
    policy: &dyn ControlPolicy,
    rule: &dyn StoppingRule,
    p: &ModelParams,
    s: &FeedingStrategy,
) -> Result<EvaluationReport, EvalError> {
    let n_paths = paths.n_paths;
    let n_steps = paths.n_steps;
    let dt = paths.dt;

    let mut values = vec![0.0f64; n_paths];
    let mut stop_steps = vec![usize::MAX; n_paths];
    let mut states: Vec<FarmState> = (0..n_paths)
        .map(|path| FarmState {
            w: p.w0,
            h: p.h0,
            p_f: paths.price_f(path, 0),
            p_b: paths.price_b(path, 0),
        })
        .collect();
    // Indices of paths that have not stopped yet.
    let mut active: Vec<usize> = (0..n_paths).collect();
    let mut active_states: Vec<FarmState> = Vec::with_capacity(n_paths);
    let mut stops: Vec<bool> = Vec::with_capacity(n_paths);
    let mut controls: Vec<f64> = Vec::with_capacity(n_paths);

    for step in 0..=n_steps {
        if active.is_empty() {
            break;
        }
        let t = paths.time(step);
        let disc = (-p.r * t).exp();
        let f = s.rate(t);

        active_states.clear();
        for &path in &active {
            let mut st = states[path];
            st.p_f = paths.price_f(path, step);
            st.p_b = paths.price_b(path, step);
            if !st.is_finite() {
                return Err(EvalError::NonFiniteState { t, path });
            }
            states[path] = st;
            active_states.push(st);
        }

        if step == n_steps {
            for (k, &path) in active.iter().enumerate() {
                values[path] += disc * terminal_reward(&active_states[k]);
                stop_steps[path] = step;
            }
            break;
        }

        rule.stop_batch(step, t, &active_states, &mut stops);
        policy.control_batch(t, &active_states, &mut controls);

        let mut next_active = Vec::with_capacity(active.len());
        for (k, &path) in active.iter().enumerate() {
            if stops[k] {
                values[path] += disc * terminal_reward(&active_states[k]);
                stop_steps[path] = step;
                continue;
            }
            let u = controls[k];
            if !(u.is_finite() && (-1e-9..=p.u_bar + 1e-9).contains(&u)) {
                return Err(EvalError::ControlOutOfBounds {
                    control: u,
                    u_bar: p.u_bar,
                    t,
                    path,
                });
            }
            let st = &mut states[path];
            values[path] += disc * running_cost(st, u) * dt;
            let (w, h) = step_biology(st.w, st.h, f, u, dt, p);
            st.w = w;
            st.h = h;
            next_active.push(path);
        }
        active = next_active;
    }

    Ok(EvaluationReport::from_samples(values, stop_steps, dt))
}

/// One row of a per-path trajectory dump (figure reproduction).
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRow {
    pub t: f64,
    pub w: f64,
    pub h: f64,
    pub p_f: f64,
    pub p_b: f64,
    pub control: f64,
    /// Discounted value accumulated so far (includes the reward once stopped).
    pub running_value: f64,
    pub stopped: bool,
}

/// Replays a single path of the batch and records the full trajectory.
/// The final running value equals that path's entry in the evaluation
/// report for the same policy and rule.
pub fn replay_path(
    paths: &PathBatch,
    path: usize,
    policy: &dyn ControlPolicy,
    rule: &dyn StoppingRule,
    p: &ModelParams,
    s: &FeedingStrategy,
) -> Result<Vec<TrajectoryRow>, EvalError> {
    assert!(path < paths.n_paths, "path index out of range");
    let n_steps = paths.n_steps;
    let dt = paths.dt;
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut value = 0.0;
    let mut stopped = false;
    let mut st = FarmState {
        w: p.w0,
        h: p.h0,
        p_f: paths.price_f(path, 0),
        p_b: paths.price_b(path, 0),
    };
    for step in 0..=n_steps {
        let t = paths.time(step);
        st.p_f = paths.price_f(path, step);
        st.p_b = paths.price_b(path, step);
        if !st.is_finite() {
            return Err(EvalError::NonFiniteState { t, path });
        }
        let disc = (-p.r * t).exp();
        let fires = !stopped && (step == n_steps || rule.stop(step, t, &st));
        if fires {
            value += disc * terminal_reward(&st);
            stopped = true;
            rows.push(TrajectoryRow {
                t,
                w: st.w,
                h: st.h,
                p_f: st.p_f,
                p_b: st.p_b,
                control: f64::NAN,
                running_value: value,
                stopped,
            });
            continue;
        }
        if stopped {
            rows.push(TrajectoryRow {
                t,
                w: st.w,
                h: st.h,
                p_f: st.p_f,
                p_b: st.p_b,
                control: f64::NAN,
                running_value: value,
                stopped,
            });
            continue;
        }
        let u = policy.control(t, &st);
        if !(u.is_finite() && (-1e-9..=p.u_bar + 1e-9).contains(&u)) {
            return Err(EvalError::ControlOutOfBounds {
                control: u,
                u_bar: p.u_bar,
                t,
                path,
            });
        }
        value += disc * running_cost(&st, u) * dt;
        rows.push(TrajectoryRow {
            t,
            w: st.w,
            h: st.h,
            p_f: st.p_f,
            p_b: st.p_b,
            control: u,
            running_value: value,
            stopped: false,
        });
        let f = s.rate(t);
        let (w, h) = step_biology(st.w, st.h, f, u, dt, p);
        st.w = w;
        st.h = h;
    }
    Ok(rows)
}

/// Constant-control choices for the analytic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkControl {
    /// `u ≡ 0`
    Zero,
    /// `u ≡ f_t`
    Biological,
}

/// Closed-form expectation of the farm value for a price-independent
/// policy stopped at the fixed time `tau`.
///
/// Discounted prices are martingales, so `E[e^{−rt} P_t] = P_0` and the
/// functional collapses to
/// `−pF0 ∫₀^τ h_s u_s ds + h_τ w_τ pB0`
/// with the biological state integrated at a fine step (1e−4).
pub fn deterministic_benchmark_value(
    s: &FeedingStrategy,
    p: &ModelParams,
    choice: BenchmarkControl,
    tau: f64,
) -> f64 {
    assert!(tau <= p.horizon + 1e-12, "tau must not exceed the horizon");
    let dt = 1e-4;
    let n_steps = (tau / dt).round() as usize;
    let mut w = p.w0;
    let mut h = p.h0;
    let mut cost_integral = 0.0;
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let f = s.rate(t);
        let u = match choice {
            BenchmarkControl::Zero => 0.0,
            BenchmarkControl::Biological => f,
        };
        cost_integral += h * u * dt;
        let (w_next, h_next) = step_biology(w, h, f, u, dt, p);
        w = w_next;
        h = h_next;
    }
    -p.p_f0 * cost_integral + h * w * p.p_b0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{biomass_peak_step, BiologicalControl, ZeroControl};
    use approx::assert_abs_diff_eq;

    fn baseline() -> (ModelParams, FeedingStrategy) {
        (ModelParams::baseline(), FeedingStrategy::linear_baseline())
    }

    #[test]
    fn running_cost_examples() {
        let st = FarmState {
            w: 1.0,
            h: 1.0,
            p_f: 0.075,
            p_b: 0.1,
        };
        assert_abs_diff_eq!(running_cost(&st, 0.0), 0.0);
        assert_abs_diff_eq!(running_cost(&st, 0.1), -0.0075, epsilon = 1e-15);
        let doubled = FarmState { h: 2.0, ..st };
        assert_abs_diff_eq!(running_cost(&doubled, 0.1), 2.0 * running_cost(&st, 0.1));
    }

    #[test]
    fn terminal_reward_examples() {
        let st = FarmState {
            w: 3.0,
            h: 0.5,
            p_f: 0.9,
            p_b: 0.1,
        };
        assert_abs_diff_eq!(terminal_reward(&st), 0.15);
        assert_abs_diff_eq!(terminal_reward(&FarmState { h: 0.0, ..st }), 0.0);
        // independent of the feed price
        assert_abs_diff_eq!(terminal_reward(&FarmState { p_f: 55.0, ..st }), 0.15);
    }

    #[test]
    fn immediate_stop_pays_initial_reward() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 64, 32, 9);
        let policy = BiologicalControl(s.clone());
        let report = evaluate_farm_value(&batch, &policy, &StopAtStep(0), &p, &s).unwrap();
        assert_abs_diff_eq!(report.mean, p.w0 * p.h0 * p.p_b0, epsilon = 1e-15);
        assert_abs_diff_eq!(report.mean_stop_time, 0.0);
    }

    #[test]
    fn zero_volatility_evaluation_matches_analytic_benchmark() {
        let (mut p, s) = baseline();
        p.sigma_f = 1e-300;
        p.sigma_b = 1e-300;
        let batch = PathBatch::simulate(&p, 2, 2048, 3);
        let tau_step = biomass_peak_step(&s, &p, batch.dt);
        for (choice, policy) in [
            (BenchmarkControl::Biological, &BiologicalControl(s.clone()) as &dyn ControlPolicy),
            (BenchmarkControl::Zero, &ZeroControl as &dyn ControlPolicy),
        ] {
            let report =
                evaluate_farm_value(&batch, policy, &StopAtStep(tau_step), &p, &s).unwrap();
            let oracle =
                deterministic_benchmark_value(&s, &p, choice, tau_step as f64 * batch.dt);
            assert_abs_diff_eq!(report.mean, oracle, epsilon = 1e-4);
        }
    }

    #[test]
    fn stochastic_evaluation_agrees_with_oracle_within_three_stderr() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 8192, 2048, 2024);
        let tau_step = biomass_peak_step(&s, &p, batch.dt);
        let policy = BiologicalControl(s.clone());
        let report = evaluate_farm_value(&batch, &policy, &StopAtStep(tau_step), &p, &s).unwrap();
        let oracle = deterministic_benchmark_value(
            &s,
            &p,
            BenchmarkControl::Biological,
            tau_step as f64 * batch.dt,
        );
        assert!(
            (report.mean - oracle).abs() <= 3.0 * report.stderr,
            "MC mean {} vs oracle {} (stderr {})",
            report.mean,
            oracle,
            report.stderr
        );
    }

    #[test]
    fn repeated_evaluation_is_pathwise_identical() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 128, 64, 11);
        let policy = BiologicalControl(s.clone());
        let a = evaluate_farm_value(&batch, &policy, &StopAtStep(32), &p, &s).unwrap();
        let b = evaluate_farm_value(&batch, &policy, &StopAtStep(32), &p, &s).unwrap();
        assert_eq!(a.per_path, b.per_path);
    }

    #[test]
    fn feeding_beats_starving_at_the_biomass_peak() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 2048, 512, 17);
        let tau_step = biomass_peak_step(&s, &p, batch.dt);
        let fed = evaluate_farm_value(
            &batch,
            &BiologicalControl(s.clone()),
            &StopAtStep(tau_step),
            &p,
            &s,
        )
        .unwrap();
        let starved =
            evaluate_farm_value(&batch, &ZeroControl, &StopAtStep(tau_step), &p, &s).unwrap();
        assert!(fed.mean > starved.mean);
    }

    #[test]
    fn out_of_bounds_policy_is_rejected() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 4, 8, 1);
        let policy = |_t: f64, _st: &FarmState| 1.5;
        let err = evaluate_farm_value(&batch, &policy, &StopAtHorizon, &p, &s).unwrap_err();
        assert!(matches!(err, EvalError::ControlOutOfBounds { .. }));
    }

    #[test]
    fn replayed_path_matches_report_value() {
        let (p, s) = baseline();
        let batch = PathBatch::simulate(&p, 16, 128, 23);
        let policy = BiologicalControl(s.clone());
        let rule = StopAtStep(77);
        let report = evaluate_farm_value(&batch, &policy, &rule, &p, &s).unwrap();
        for path in [0, 7, 15] {
            let rows = replay_path(&batch, path, &policy, &rule, &p, &s).unwrap();
            let n_stop_flips = rows.windows(2).filter(|w| !w[0].stopped && w[1].stopped).count();
            assert!(rows.last().unwrap().stopped);
            assert!(n_stop_flips <= 1);
            assert_abs_diff_eq!(
                rows.last().unwrap().running_value,
                report.per_path[path],
                epsilon = 1e-14
            );
            // the stopping row already carries the final value
            let stop_row = rows.iter().find(|r| r.stopped).unwrap();
            assert_abs_diff_eq!(
                stop_row.running_value,
                report.per_path[path],
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn population_rescaling_is_linear_in_h0() {
        let (p, s) = baseline();
        let mut p2 = p.clone();
        p2.h0 = 2.0;
        // price simulation does not involve h0, so the batches coincide
        let batch = PathBatch::simulate(&p, 512, 256, 31);
        let policy = BiologicalControl(s.clone());
        let r1 = evaluate_farm_value(&batch, &policy, &StopAtStep(170), &p, &s).unwrap();
        let r2 = evaluate_farm_value(&batch, &policy, &StopAtStep(170), &p2, &s).unwrap();
        assert_abs_diff_eq!(r2.mean, 2.0 * r1.mean, epsilon = 1e-12);
    }
}
