//! Closed-form feedback control from the value function's gradient.
//!
//! The control only enters the generator through the weight and
//! population drifts and the feeding cost, so the first-order condition
//! of `L^u V + k` in `u` is solvable:
//!
//!   u = f_t − h pF / (2 h V_h μF + 2 V_w w γF (1 − (w/w∞)^ν)),
//!
//! projected onto `[0, f_t]`. The critical point is a maximum when the
//! denominator is positive (V_w, V_h > 0 and w < w∞); otherwise the
//! Hamiltonian is compared at the interval endpoints directly.

use crate::model::{population_drift, weight_drift, FarmState, FeedingStrategy, ModelParams};

/// Denominator floor below which the closed form is abandoned for the
/// endpoint comparison.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// The `u`-dependent part of the Hamiltonian
/// `V_w b^w(u) + V_h b^h(u) − h u pF`.
#[inline]
pub fn hamiltonian_control_part(
    grad_w: f64,
    grad_h: f64,
    state: &FarmState,
    feed_rate: f64,
    u: f64,
    p: &ModelParams,
) -> f64 {
    grad_w * weight_drift(state.w, feed_rate, u, p) + grad_h * population_drift(state.h, feed_rate, u, p)
        - state.h * u * state.p_f
}

/// Optimal feeding rate given the value gradient at `(t, x)`.
pub fn feedback_control(
    grad_w: f64,
    grad_h: f64,
    t: f64,
    state: &FarmState,
    s: &FeedingStrategy,
    p: &ModelParams,
) -> f64 {
    let f = s.rate(t);
    let geom = 1.0 - (state.w / p.w_inf).powf(p.nu);
    let denom = 2.0 * state.h * grad_h * p.mu_f + 2.0 * grad_w * state.w * p.gamma_f * geom;
    if denom > DENOMINATOR_FLOOR {
        (f - state.h * state.p_f / denom).clamp(0.0, f)
    } else {
        // second-order condition violated or degenerate: the Hamiltonian
        // is not concave in u, so the maximum sits at an endpoint
        let at_zero = hamiltonian_control_part(grad_w, grad_h, state, f, 0.0, p);
        let at_f = hamiltonian_control_part(grad_w, grad_h, state, f, f, p);
        if at_zero >= at_f {
            0.0
        } else {
            f
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn baseline() -> (ModelParams, FeedingStrategy) {
        (ModelParams::baseline(), FeedingStrategy::linear_baseline())
    }

    #[test]
    fn zero_feed_price_gives_the_biological_rate() {
        let (p, s) = baseline();
        let state = FarmState {
            w: 1.5,
            h: 0.8,
            p_f: 0.0,
            p_b: 0.1,
        };
        let t = 1.0;
        assert_abs_diff_eq!(feedback_control(0.2, 0.3, t, &state, &s, &p), s.rate(t), epsilon = 1e-14);
    }

    #[test]
    fn huge_population_sensitivity_pushes_u_to_f_from_below() {
        let (p, s) = baseline();
        let state = FarmState {
            w: 1.0,
            h: 1.0,
            p_f: 0.075,
            p_b: 0.1,
        };
        let t = 2.0;
        let u = feedback_control(0.1, 1e9, t, &state, &s, &p);
        assert!(u < s.rate(t));
        assert!(s.rate(t) - u < 1e-8);
    }

    #[test]
    fn matches_brute_force_argmax_on_synthetic_gradients() {
        // 10³ random states with positive V_w, V_h against a 10⁵-point
        // control grid over the admissible interval.
        let (p, s) = baseline();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let m = 100_000;
        let du = p.u_bar / (m - 1) as f64;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let t = rng.gen_range(0.0..p.horizon);
            let state = FarmState {
                w: rng.gen_range(0.005..2.99),
                h: rng.gen_range(0.1..1.1),
                p_f: rng.gen_range(0.0019..0.3856),
                p_b: rng.gen_range(0.0055..0.2635),
            };
            let grad_w = rng.gen_range(1e-3..0.5);
            let grad_h = rng.gen_range(1e-3..0.5);
            let f = s.rate(t);
            let u_formula = feedback_control(grad_w, grad_h, t, &state, &s, &p);
            let mut best_u = 0.0;
            let mut best = f64::NEG_INFINITY;
            for k in 0..m {
                let u = k as f64 * du;
                let val = hamiltonian_control_part(grad_w, grad_h, &state, f, u, &p);
                if val > best {
                    best = val;
                    best_u = u;
                }
            }
            worst = worst.max((u_formula - best_u).abs());
        }
        assert!(worst <= du + 1e-12, "max deviation {worst} exceeds grid spacing {du}");
    }

    #[test]
    fn wrong_sign_denominator_falls_back_to_the_better_endpoint() {
        let (p, s) = baseline();
        let t = 1.5;
        let f = s.rate(t);
        let state = FarmState {
            w: 1.0,
            h: 1.0,
            p_f: 0.2,
            p_b: 0.1,
        };
        // negative gradients flip the concavity
        let (grad_w, grad_h) = (-0.3, -0.2);
        let u = feedback_control(grad_w, grad_h, t, &state, &s, &p);
        let at_zero = hamiltonian_control_part(grad_w, grad_h, &state, f, 0.0, &p);
        let at_f = hamiltonian_control_part(grad_w, grad_h, &state, f, f, &p);
        if at_zero >= at_f {
            assert_abs_diff_eq!(u, 0.0);
        } else {
            assert_abs_diff_eq!(u, f);
        }
        // convexity means an endpoint beats the interior critical point
        let mid = hamiltonian_control_part(grad_w, grad_h, &state, f, 0.5 * f, &p);
        assert!(at_zero.max(at_f) >= mid);
    }
}
