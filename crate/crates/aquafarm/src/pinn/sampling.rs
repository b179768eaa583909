//! Region-balanced training data: rejection sampling against the current
//! value network.
//!
//! Continuation points satisfy `V > g`; free-boundary points satisfy
//! `|V − g| < ε·U` with a fresh uniform `U` per candidate, which keeps
//! the sampled band fuzzy so the network cannot learn a constant offset
//! of the boundary. Terminal points are uniform in space at `t = T`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::residual::{exercise_value, Point};
use crate::fd::GridSpec;
use crate::model::ModelParams;
use crate::nn::Mlp;

/// Uniform sampling box over `(t, w, h, pF, pB)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub lo: [f64; 5],
    pub hi: [f64; 5],
}

impl SamplingBox {
    /// The solver's state box with `t ∈ [0, horizon]`.
    pub fn from_grid(grid: &GridSpec, p: &ModelParams) -> Self {
        Self {
            lo: [0.0, grid.w.lo, grid.h.lo, grid.p_f.lo, grid.p_b.lo],
            hi: [p.horizon, grid.w.hi, grid.h.hi, grid.p_f.hi, grid.p_b.hi],
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        std::array::from_fn(|d| rng.gen_range(self.lo[d]..self.hi[d]))
    }

    fn sample_terminal(&self, rng: &mut ChaCha8Rng) -> Point {
        let mut x = self.sample(rng);
        x[0] = self.hi[0];
        x
    }
}

/// One epoch's training regions.
#[derive(Debug, Clone)]
pub struct Regions {
    pub continuation: Vec<Point>,
    pub boundary: Vec<Point>,
    pub terminal: Vec<Point>,
}

#[derive(Debug, Error)]
#[error(
    "{region} sampler starved: accepted {accepted}/{needed} after {candidates} candidates \
     (acceptance rate {rate:.2e})"
)]
pub struct SamplingError {
    pub region: &'static str,
    pub accepted: usize,
    pub needed: usize,
    pub candidates: usize,
    pub rate: f64,
}

fn fill_region_with<F>(
    value_batch: F,
    bounds: &SamplingBox,
    rng: &mut ChaCha8Rng,
    batch: usize,
    max_rounds: usize,
    fuzzy_eps: Option<f64>,
    region: &'static str,
) -> Result<Vec<Point>, SamplingError>
where
    F: Fn(&[Point]) -> Vec<f64>,
{
    let chunk = 4 * batch;
    let mut accepted = Vec::with_capacity(batch);
    let mut candidates = 0usize;
    for _ in 0..max_rounds {
        let points: Vec<Point> = (0..chunk).map(|_| bounds.sample(rng)).collect();
        // fresh uniforms must be drawn in lockstep with the candidates so
        // the stream stays reproducible
        let thresholds: Vec<f64> = match fuzzy_eps {
            Some(eps) => points.iter().map(|_| eps * rng.gen::<f64>()).collect(),
            None => Vec::new(),
        };
        candidates += chunk;
        let values = value_batch(&points);
        for (idx, (x, v)) in points.iter().zip(values.iter()).enumerate() {
            let g = exercise_value(x);
            let keep = match fuzzy_eps {
                None => *v > g,
                Some(_) => (*v - g).abs() < thresholds[idx],
            };
            if keep {
                accepted.push(*x);
                if accepted.len() == batch {
                    return Ok(accepted);
                }
            }
        }
    }
    Err(SamplingError {
        region,
        accepted: accepted.len(),
        needed: batch,
        candidates,
        rate: accepted.len() as f64 / candidates as f64,
    })
}

fn fill_region(
    net: &Mlp,
    bounds: &SamplingBox,
    rng: &mut ChaCha8Rng,
    batch: usize,
    max_rounds: usize,
    fuzzy_eps: Option<f64>,
    region: &'static str,
) -> Result<Vec<Point>, SamplingError> {
    fill_region_with(|pts| net.value_batch(pts), bounds, rng, batch, max_rounds, fuzzy_eps, region)
}

/// Draws the three region batches for one epoch.
pub fn sample_regions(
    net: &Mlp,
    bounds: &SamplingBox,
    batch: usize,
    fuzzy_eps: f64,
    max_rounds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Regions, SamplingError> {
    let continuation = fill_region(net, bounds, rng, batch, max_rounds, None, "continuation")?;
    let boundary = fill_region(net, bounds, rng, batch, max_rounds, Some(fuzzy_eps), "fuzzy boundary")?;
    let terminal = (0..batch).map(|_| bounds.sample_terminal(rng)).collect();
    Ok(Regions {
        continuation,
        boundary,
        terminal,
    })
}
