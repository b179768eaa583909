//! Farm model: parameters, biological feeding schedules, and the controlled
//! state dynamics.
//!
//! The farm state is `(w, h, pF, pB)`: mean fish weight, population count,
//! feed price and biomass price. Weight and population are deterministic
//! given the feeding control `u` and the exogenous schedule `f`:
//!
//!   dw = (γ − γF (f − u)²) w (1 − (w/w∞)^ν) dt
//!   dh = (−μ − μF (f − u)²) h dt
//!
//! Weight follows generalized logistic (Richards) growth; ν = 1 recovers
//! the classical logistic curve. Feeding off the biological schedule
//! (u ≠ f) reduces growth and increases mortality quadratically.
//!
//! Prices are independent geometric Brownian motions with drift `r` under
//! the pricing measure (see [`crate::paths`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Model constants: biology, prices, horizon, control bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Initial population count (normalized).
    pub h0: f64,
    /// Initial mean weight.
    pub w0: f64,
    /// Initial feed price.
    pub p_f0: f64,
    /// Initial biomass price.
    pub p_b0: f64,
    /// Intrinsic mortality rate.
    pub mu: f64,
    /// Mortality penalty coefficient for mis-feeding.
    pub mu_f: f64,
    /// Intrinsic growth rate.
    pub gamma: f64,
    /// Growth penalty coefficient for mis-feeding.
    pub gamma_f: f64,
    /// Asymptotic weight.
    pub w_inf: f64,
    /// Shape exponent of the growth curve.
    pub nu: f64,
    /// Risk-free rate.
    pub r: f64,
    /// Feed price volatility.
    pub sigma_f: f64,
    /// Biomass price volatility.
    pub sigma_b: f64,
    /// Time horizon.
    pub horizon: f64,
    /// Upper bound of the admissible control interval `[0, u_bar]`.
    pub u_bar: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ModelParams {
    /// The parameter set used throughout the experiments.
    pub fn baseline() -> Self {
        Self {
            h0: 1.0,
            w0: 0.010,
            p_f0: 0.075,
            p_b0: 0.100,
            mu: 0.100,
            mu_f: 3.000,
            gamma: 5.000,
            gamma_f: 10.000,
            w_inf: 3.000,
            nu: 0.750,
            r: 0.010,
            sigma_f: 0.250,
            sigma_b: 0.100,
            horizon: 3.000,
            u_bar: 1.000,
        }
    }

    /// Checks the structural invariants of the parameter set.
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            ("h0", self.h0),
            ("w0", self.w0),
            ("p_f0", self.p_f0),
            ("p_b0", self.p_b0),
            ("mu", self.mu),
            ("mu_f", self.mu_f),
            ("gamma", self.gamma),
            ("gamma_f", self.gamma_f),
            ("w_inf", self.w_inf),
            ("nu", self.nu),
            ("r", self.r),
            ("sigma_f", self.sigma_f),
            ("sigma_b", self.sigma_b),
            ("horizon", self.horizon),
            ("u_bar", self.u_bar),
        ];
        for (name, v) in all {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::NonPositiveParam { name, value: v });
            }
        }
        if self.w0 >= self.w_inf {
            return Err(ModelError::InitialWeightAboveAsymptote {
                w0: self.w0,
                w_inf: self.w_inf,
            });
        }
        Ok(())
    }

    /// Same parameters with `h0` replaced by 1. The farm value is linear in
    /// the population, so runs can be performed on the normalized model and
    /// the reported values rescaled by the true `h0`.
    pub fn normalized_population(&self) -> (Self, f64) {
        let mut p = self.clone();
        let scale = p.h0;
        p.h0 = 1.0;
        (p, scale)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {name} must be strictly positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("initial weight w0={w0} must lie below the asymptotic weight w_inf={w_inf}")]
    InitialWeightAboveAsymptote { w0: f64, w_inf: f64 },
    #[error("feeding strategy produced rate {rate} outside [0, u_bar={u_bar}] at t={t}")]
    FeedingRateOutOfRange { rate: f64, t: f64, u_bar: f64 },
    #[error("control policy produced a non-finite value at t={t}")]
    NonFinitePolicy { t: f64 },
}

/// Deterministic biological feeding schedule `f_t`.
///
/// Each variant is normalized so the rate stays in `[0, 1]` over the
/// horizon for the baseline parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FeedingStrategy {
    /// `f_t = f0 + eta * t`
    Linear { f0: f64, eta: f64 },
    /// `f_t = f0 * exp(lambda * t)`
    Exponential { f0: f64, lambda: f64 },
    /// `f_t = f0 + (l - f0) / (1 + exp(-k (t - t_i)))`
    Logistic { f0: f64, l: f64, k: f64, t_i: f64 },
    /// `f_t = a * sin(2 pi t / t_p) + b * t + f0`
    Sinusoidal { f0: f64, a: f64, t_p: f64, b: f64 },
}

impl FeedingStrategy {
    /// Baseline linear schedule: starts at 0.1 and reaches 1.0 at t = 3.
    pub fn linear_baseline() -> Self {
        Self::Linear { f0: 0.1, eta: 0.3 }
    }

    /// Exponential schedule normalized so `f0 * exp(lambda * horizon) = 1`.
    pub fn exponential_normalized(f0: f64, horizon: f64) -> Self {
        Self::Exponential {
            f0,
            lambda: (1.0 / f0).ln() / horizon,
        }
    }

    /// Logistic schedule with ceiling `l = 1`, slope `k = 2.5` and the
    /// inflection point at mid-horizon.
    pub fn logistic_baseline(f0: f64, horizon: f64) -> Self {
        Self::Logistic {
            f0,
            l: 1.0,
            k: 2.5,
            t_i: 0.5 * horizon,
        }
    }

    /// Sinusoidal schedule with the drift `b` chosen so the envelope
    /// `a + b * horizon + f0` reaches 1.
    pub fn sinusoidal_normalized(f0: f64, a: f64, t_p: f64, horizon: f64) -> Self {
        Self::Sinusoidal {
            f0,
            a,
            t_p,
            b: (1.0 - a - f0) / horizon,
        }
    }

    /// The feeding rate `f_t`.
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Self::Linear { f0, eta } => f0 + eta * t,
            Self::Exponential { f0, lambda } => f0 * (lambda * t).exp(),
            Self::Logistic { f0, l, k, t_i } => f0 + (l - f0) / (1.0 + (-k * (t - t_i)).exp()),
            Self::Sinusoidal { f0, a, t_p, b } => {
                a * (2.0 * std::f64::consts::PI * t / t_p).sin() + b * t + f0
            }
        }
    }

    /// Short tag used in artifact filenames and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Exponential { .. } => "efr",
            Self::Logistic { .. } => "lfr",
            Self::Sinusoidal { .. } => "sfr",
        }
    }
}

/// Farm state at a fixed time: weight, population, and the two prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarmState {
    pub w: f64,
    pub h: f64,
    pub p_f: f64,
    pub p_b: f64,
}

impl FarmState {
    pub fn initial(p: &ModelParams) -> Self {
        Self {
            w: p.w0,
            h: p.h0,
            p_f: p.p_f0,
            p_b: p.p_b0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.h.is_finite() && self.p_f.is_finite() && self.p_b.is_finite()
    }
}

/// Weight drift `(γ − γF (f − u)²) w (1 − (w/w∞)^ν)`.
#[inline]
pub fn weight_drift(w: f64, feed_rate: f64, control: f64, p: &ModelParams) -> f64 {
    let miss = feed_rate - control;
    (p.gamma - p.gamma_f * miss * miss) * w * (1.0 - (w / p.w_inf).powf(p.nu))
}

/// Population drift `(−μ − μF (f − u)²) h`.
#[inline]
pub fn population_drift(h: f64, feed_rate: f64, control: f64, p: &ModelParams) -> f64 {
    let miss = feed_rate - control;
    (-p.mu - p.mu_f * miss * miss) * h
}

/// One explicit Euler step of the biological state. Overshoots are clamped
/// back into the invariant region `w ∈ [0, w∞]`, `h ∈ [0, h0]` that the
/// continuous dynamics cannot leave.
#[inline]
pub fn step_biology(w: f64, h: f64, feed_rate: f64, control: f64, dt: f64, p: &ModelParams) -> (f64, f64) {
    let w_next = w + dt * weight_drift(w, feed_rate, control, p);
    let h_next = h + dt * population_drift(h, feed_rate, control, p);
    (w_next.clamp(0.0, p.w_inf), h_next.clamp(0.0, p.h0))
}

/// Control policies map `(t, state)` to a feeding rate.
///
/// `control_batch` exists so that expensive policies (network evaluation,
/// grid interpolation) can vectorize over the active Monte-Carlo paths of a
/// time step; the default forwards to the scalar method.
pub trait ControlPolicy: Sync {
    fn control(&self, t: f64, state: &FarmState) -> f64;

    fn control_batch(&self, t: f64, states: &[FarmState], out: &mut Vec<f64>) {
        out.clear();
        out.extend(states.iter().map(|s| self.control(t, s)));
    }
}

impl<F> ControlPolicy for F
where
    F: Fn(f64, &FarmState) -> f64 + Sync,
{
    fn control(&self, t: f64, state: &FarmState) -> f64 {
        self(t, state)
    }
}

/// The biological schedule used as a control: `u ≡ f_t`.
pub struct BiologicalControl(pub FeedingStrategy);

impl ControlPolicy for BiologicalControl {
    fn control(&self, t: f64, _state: &FarmState) -> f64 {
        self.0.rate(t)
    }
}

/// The starvation benchmark `u ≡ 0`.
pub struct ZeroControl;

impl ControlPolicy for ZeroControl {
    fn control(&self, _t: f64, _state: &FarmState) -> f64 {
        0.0
    }
}

/// A point of a deterministic trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub w: f64,
    pub h: f64,
}

/// Integrates `(w, h)` forward by explicit Euler under the given policy.
///
/// `prices` optionally supplies `(pF, pB)` per step for price-dependent
/// policies; without them the policy sees NaN prices, so a policy that
/// (incorrectly) reads prices surfaces as a [`ModelError::NonFinitePolicy`].
pub fn integrate_deterministic(
    s: &FeedingStrategy,
    policy: &dyn ControlPolicy,
    prices: Option<&[(f64, f64)]>,
    dt: f64,
    horizon: f64,
    p: &ModelParams,
) -> Result<Vec<TrajectoryPoint>, ModelError> {
    assert!(dt > 0.0, "time step must be positive");
    let n_steps = (horizon / dt).round() as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut w = p.w0;
    let mut h = p.h0;
    for n in 0..=n_steps {
        let t = n as f64 * dt;
        out.push(TrajectoryPoint { t, w, h });
        if n == n_steps {
            break;
        }
        let (p_f, p_b) = match prices {
            Some(px) => px[n.min(px.len() - 1)],
            None => (f64::NAN, f64::NAN),
        };
        let state = FarmState { w, h, p_f, p_b };
        let u = policy.control(t, &state);
        if !u.is_finite() {
            return Err(ModelError::NonFinitePolicy { t });
        }
        let f = s.rate(t);
        let (w_next, h_next) = step_biology(w, h, f, u, dt, p);
        w = w_next;
        h = h_next;
    }
    Ok(out)
}

/// Time at which the biomass `h_t * w_t` peaks under `u ≡ f` (grid search
/// with step `dt`). If the biomass is monotone the end point of the
/// monotone run is returned (`horizon` for increasing, 0 for decreasing).
pub fn biomass_peak_time(s: &FeedingStrategy, p: &ModelParams, dt: f64) -> f64 {
    biomass_peak_step(s, p, dt) as f64 * dt
}

/// Grid index of the biomass peak; `biomass_peak_time` in step units.
pub fn biomass_peak_step(s: &FeedingStrategy, p: &ModelParams, dt: f64) -> usize {
    let policy = BiologicalControl(s.clone());
    let traj = integrate_deterministic(s, &policy, None, dt, p.horizon, p)
        .expect("biological policy is total");
    let mut best_step = 0;
    let mut best = f64::NEG_INFINITY;
    for (n, pt) in traj.iter().enumerate() {
        let biomass = pt.w * pt.h;
        if biomass > best {
            best = biomass;
            best_step = n;
        }
    }
    best_step
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn linear_rate_endpoints() {
        let s = FeedingStrategy::linear_baseline();
        assert_abs_diff_eq!(s.rate(0.0), 0.1);
        assert_abs_diff_eq!(s.rate(3.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exponential_rate_normalization() {
        let s = FeedingStrategy::exponential_normalized(0.1, 3.0);
        assert_abs_diff_eq!(s.rate(0.0), 0.1);
        assert_abs_diff_eq!(s.rate(3.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sinusoidal_rate_at_zero() {
        let s = FeedingStrategy::sinusoidal_normalized(0.1, 0.1, 0.25, 3.0);
        assert_abs_diff_eq!(s.rate(0.0), 0.1);
    }

    #[test]
    fn all_baseline_schedules_stay_in_unit_interval() {
        let p = ModelParams::baseline();
        let schedules = [
            FeedingStrategy::linear_baseline(),
            FeedingStrategy::exponential_normalized(0.1, p.horizon),
            FeedingStrategy::logistic_baseline(0.1, p.horizon),
            FeedingStrategy::sinusoidal_normalized(0.1, 0.1, p.horizon / 12.0, p.horizon),
        ];
        for s in &schedules {
            for k in 0..=10_000 {
                let t = p.horizon * k as f64 / 10_000.0;
                let f = s.rate(t);
                assert!(
                    (0.0..=1.0 + 1e-12).contains(&f),
                    "{s:?} leaves [0,1] at t={t}: {f}"
                );
            }
        }
    }

    #[test]
    fn weight_drift_vanishes_at_asymptote() {
        let p = ModelParams::baseline();
        assert_abs_diff_eq!(weight_drift(p.w_inf, 0.9, 0.2, &p), 0.0);
    }

    #[test]
    fn weight_drift_at_initial_weight_matches_direct_evaluation() {
        let p = ModelParams::baseline();
        // γ w (1 − (0.01/3)^0.75) evaluated independently.
        let expected = 5.0 * 0.01 * (1.0 - (0.01f64 / 3.0).powf(0.75));
        assert_relative_eq!(weight_drift(0.01, 0.4, 0.4, &p), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.04930636809, epsilon = 1e-11);
    }

    #[test]
    fn weight_drift_zero_when_penalty_cancels_growth() {
        let p = ModelParams::baseline();
        // (f − u)² = γ/γF = 0.5
        let miss = 0.5f64.sqrt();
        assert_abs_diff_eq!(weight_drift(1.7, miss, 0.0, &p), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_drift_is_maximized_at_biological_rate() {
        let p = ModelParams::baseline();
        let f = 0.6;
        let n = 20_001;
        let mut best_u = f64::NAN;
        let mut best = f64::NEG_INFINITY;
        for k in 0..n {
            let u = k as f64 / (n - 1) as f64;
            let d = weight_drift(1.0, f, u, &p);
            if d > best {
                best = d;
                best_u = u;
            }
        }
        assert_abs_diff_eq!(best_u, f, epsilon = 1.0 / (n - 1) as f64);
    }

    #[test]
    fn population_drift_examples() {
        let p = ModelParams::baseline();
        assert_abs_diff_eq!(population_drift(1.0, 0.3, 0.3, &p), -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(population_drift(1.0, 1.0, 0.0, &p), -3.1, epsilon = 1e-15);
        assert_abs_diff_eq!(population_drift(0.5, 0.3, 0.3, &p), -0.05, epsilon = 1e-15);
    }

    #[test]
    fn population_drift_bounded_by_intrinsic_mortality() {
        let p = ModelParams::baseline();
        for k in 0..100 {
            let u = k as f64 / 99.0;
            assert!(population_drift(0.8, 0.4, u, &p) <= -p.mu * 0.8 + 1e-15);
        }
    }

    #[test]
    fn euler_weight_matches_closed_form_for_nu_one() {
        // For ν = 1 and u ≡ f the weight follows the classical logistic
        // curve w(t) = w∞ / (1 + (w∞/w0 − 1) exp(−γ t)).
        let mut p = ModelParams::baseline();
        p.nu = 1.0;
        let s = FeedingStrategy::linear_baseline();
        let policy = BiologicalControl(s.clone());
        // Explicit Euler is first order with an error constant ~8 here
        // (steep logistic mid-phase), so the agreement scales with dt.
        for (dt, tol) in [(1e-4, 1e-3), (1e-6, 1e-5)] {
            let traj = integrate_deterministic(&s, &policy, None, dt, p.horizon, &p).unwrap();
            let max_err = traj
                .iter()
                .step_by(traj.len() / 60)
                .map(|pt| {
                    let exact =
                        p.w_inf / (1.0 + (p.w_inf / p.w0 - 1.0) * (-p.gamma * pt.t).exp());
                    (pt.w - exact).abs()
                })
                .fold(0.0, f64::max);
            assert!(max_err <= tol, "dt={dt}: max error {max_err} > {tol}");
        }
    }

    #[test]
    fn euler_population_matches_exponential_decay() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let policy = BiologicalControl(s.clone());
        let dt = 1e-4;
        let traj = integrate_deterministic(&s, &policy, None, dt, p.horizon, &p).unwrap();
        let end = traj.last().unwrap();
        assert_abs_diff_eq!(end.h, (-p.mu * end.t).exp(), epsilon = 1e-4);
    }

    #[test]
    fn euler_population_with_constant_penalty() {
        // u ≡ 0 and f ≡ c gives h(t) = exp(−(μ + μF c²) t).
        let p = ModelParams::baseline();
        let c = 0.4;
        let s = FeedingStrategy::Linear { f0: c, eta: 0.0 };
        let dt = 1e-4;
        let traj = integrate_deterministic(&s, &ZeroControl, None, dt, p.horizon, &p).unwrap();
        let end = traj.last().unwrap();
        let exact = (-(p.mu + p.mu_f * c * c) * end.t).exp();
        assert_abs_diff_eq!(end.h, exact, epsilon = 1e-4);
    }

    #[test]
    fn price_reading_policy_without_prices_is_rejected() {
        let p = ModelParams::baseline();
        let s = FeedingStrategy::linear_baseline();
        let policy = |_t: f64, st: &FarmState| st.p_f;
        let err = integrate_deterministic(&s, &policy, None, 0.01, 1.0, &p).unwrap_err();
        assert!(matches!(err, ModelError::NonFinitePolicy { .. }));
    }

    #[test]
    fn biomass_peak_degenerate_cases() {
        let s = FeedingStrategy::linear_baseline();
        let mut p = ModelParams::baseline();
        p.mu = 1e-300; // effectively no mortality: biomass increases to T
        assert_abs_diff_eq!(biomass_peak_time(&s, &p, 3.0 / 2048.0), p.horizon);
        let mut p = ModelParams::baseline();
        p.gamma = 1e-300; // no growth: only mortality acts, peak at 0
        assert_abs_diff_eq!(biomass_peak_time(&s, &p, 3.0 / 2048.0), 0.0);
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        let mut p = ModelParams::baseline();
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::baseline();
        p.w0 = 5.0;
        assert!(p.validate().is_err());
        assert!(ModelParams::baseline().validate().is_ok());
    }
}
