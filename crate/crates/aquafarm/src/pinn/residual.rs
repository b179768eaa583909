//! Assembly of the pricing-PDE residual from network jets.
//!
//! For a value function `V` and control `u` the residual is
//! `∂V/∂t + L^u V − r V + k(t, x, u)` with the generator
//!
//!   L^u V = b^w V_w + b^h V_h + r pF V_pF + r pB V_pB
//!         + ½ σF² pF² V_pFpF + ½ σB² pB² V_pBpB.

use crate::model::{population_drift, weight_drift, FeedingStrategy, ModelParams};
use crate::nn::{Jet, Mlp, NnError};
use crate::payoff::running_cost;

/// A sampling point `(t, w, h, pF, pB)`.
pub type Point = [f64; 5];

pub(crate) fn point_state(x: &Point) -> crate::model::FarmState {
    crate::model::FarmState {
        w: x[1],
        h: x[2],
        p_f: x[3],
        p_b: x[4],
    }
}

/// Harvest value `g` at a sampling point.
#[inline]
pub fn exercise_value(x: &Point) -> f64 {
    x[1] * x[2] * x[4]
}

/// Generator applied to the jet plus the running cost, `L^u V + k`.
/// This is the quantity the control maximizes pointwise.
pub fn generator_plus_cost(jet: &Jet, x: &Point, u: f64, p: &ModelParams, s: &FeedingStrategy) -> f64 {
    let (t, w, h, pf, pb) = (x[0], x[1], x[2], x[3], x[4]);
    let f = s.rate(t);
    weight_drift(w, f, u, p) * jet.grad[1]
        + population_drift(h, f, u, p) * jet.grad[2]
        + p.r * pf * jet.grad[3]
        + p.r * pb * jet.grad[4]
        + 0.5 * (p.sigma_f * pf).powi(2) * jet.d2_pf
        + 0.5 * (p.sigma_b * pb).powi(2) * jet.d2_pb
        + running_cost(&point_state(x), u)
}

/// Full PDE residual `V_t + L^u V − r V + k` at one point.
pub fn pde_residual_at(jet: &Jet, x: &Point, u: f64, p: &ModelParams, s: &FeedingStrategy) -> f64 {
    jet.grad[0] + generator_plus_cost(jet, x, u, p, s) - p.r * jet.value
}

/// Residuals of a network over a batch with per-point controls.
pub fn pde_residual_batch(
    net: &Mlp,
    points: &[Point],
    controls: &[f64],
    p: &ModelParams,
    s: &FeedingStrategy,
) -> Result<Vec<f64>, NnError> {
    assert_eq!(points.len(), controls.len());
    let jets = net.jet_batch(points)?;
    Ok(points
        .iter()
        .zip(jets.iter())
        .zip(controls.iter())
        .map(|((x, jet), &u)| pde_residual_at(jet, x, u, p, s))
        .collect())
}

/// Jet of the manufactured solution `V(t,x) = e^{−r(T−t)} w h pB`,
/// derived analytically. Used by tests as an assembly oracle.
pub fn manufactured_jet(x: &Point, p: &ModelParams) -> Jet {
    let (t, w, h, _pf, pb) = (x[0], x[1], x[2], x[3], x[4]);
    let e = (-p.r * (p.horizon - t)).exp();
    Jet {
        value: e * w * h * pb,
        grad: [p.r * e * w * h * pb, e * h * pb, e * w * pb, 0.0, e * w * h],
        d2_pf: 0.0,
        d2_pb: 0.0,
    }
}

/// Closed-form residual of the manufactured solution, expanded by hand:
/// the `∂t` and `−rV` terms cancel against each other and the `pB` drift
/// term adds `r w h pB e`, leaving
/// `e^{−r(T−t)} pB (b^w h + b^h w + r w h) − h u pF`.
pub fn manufactured_residual(x: &Point, u: f64, p: &ModelParams, s: &FeedingStrategy) -> f64 {
    let (t, w, h, pf, pb) = (x[0], x[1], x[2], x[3], x[4]);
    let e = (-p.r * (p.horizon - t)).exp();
    let f = s.rate(t);
    e * pb * (weight_drift(w, f, u, p) * h + population_drift(h, f, u, p) * w + p.r * w * h)
        - h * u * pf
}
