//! Seeded Monte-Carlo price paths shared across strategy evaluations.
//!
//! Both prices follow geometric Brownian motions with drift `r` and are
//! simulated with the exact log-space update, so the only discretization
//! error in a pathwise comparison comes from the payoff quadrature, never
//! from the price dynamics. Every path draws from its own counter-based
//! stream of the seeded generator, which makes the batch reproducible and
//! independent of parallel scheduling.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::model::ModelParams;

/// A batch of simulated price paths with their Gaussian increments.
///
/// Layout: `p_f[path * (n_steps + 1) + step]`, increments
/// `increments[2 * (path * n_steps + step) + {0: feed, 1: biomass}]`.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    increments: Vec<f64>,
    p_f: Vec<f64>,
    p_b: Vec<f64>,
}

impl PathBatch {
    /// Simulates `n_paths` price paths on the grid `{0, dt, ..., n_steps dt}`
    /// with `dt = horizon / n_steps`.
    pub fn simulate(p: &ModelParams, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        assert!(n_paths >= 1 && n_steps >= 1);
        let dt = p.horizon / n_steps as f64;
        let sqrt_dt = dt.sqrt();
        let drift_f = (p.r - 0.5 * p.sigma_f * p.sigma_f) * dt;
        let drift_b = (p.r - 0.5 * p.sigma_b * p.sigma_b) * dt;

        let mut increments = vec![0.0; 2 * n_paths * n_steps];
        let mut p_f = vec![0.0; n_paths * (n_steps + 1)];
        let mut p_b = vec![0.0; n_paths * (n_steps + 1)];

        increments
            .par_chunks_mut(2 * n_steps)
            .zip(p_f.par_chunks_mut(n_steps + 1))
            .zip(p_b.par_chunks_mut(n_steps + 1))
            .enumerate()
            .for_each(|(path, ((inc, pf), pb))| {
                // One independent stream per path: identical output no
                // matter how the paths are scheduled across threads.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(path as u64);
                pf[0] = p.p_f0;
                pb[0] = p.p_b0;
                for step in 0..n_steps {
                    let z_f: f64 = StandardNormal.sample(&mut rng);
                    let z_b: f64 = StandardNormal.sample(&mut rng);
                    inc[2 * step] = z_f;
                    inc[2 * step + 1] = z_b;
                    pf[step + 1] = pf[step] * (drift_f + p.sigma_f * sqrt_dt * z_f).exp();
                    pb[step + 1] = pb[step] * (drift_b + p.sigma_b * sqrt_dt * z_b).exp();
                }
            });

        Self {
            n_paths,
            n_steps,
            dt,
            seed,
            increments,
            p_f,
            p_b,
        }
    }

    #[inline]
    pub fn price_f(&self, path: usize, step: usize) -> f64 {
        self.p_f[path * (self.n_steps + 1) + step]
    }

    #[inline]
    pub fn price_b(&self, path: usize, step: usize) -> f64 {
        self.p_b[path * (self.n_steps + 1) + step]
    }

    /// Feed-price increment `Z^F` drawn for `step -> step + 1`.
    #[inline]
    pub fn increment_f(&self, path: usize, step: usize) -> f64 {
        self.increments[2 * (path * self.n_steps + step)]
    }

    /// Biomass-price increment `Z^B` drawn for `step -> step + 1`.
    #[inline]
    pub fn increment_b(&self, path: usize, step: usize) -> f64 {
        self.increments[2 * (path * self.n_steps + step) + 1]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Debug export: one row per (path, step).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "path_id,step,t,pF,pB")?;
        for path in 0..self.n_paths {
            for step in 0..=self.n_steps {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    path,
                    step,
                    self.time(step),
                    self.price_f(path, step),
                    self.price_b(path, step)
                )?;
            }
        }
        Ok(())
    }
}
