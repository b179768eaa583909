//! Regular grids for the finite-difference solver.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

/// One homogeneous grid axis with `n` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2, "axis needs at least two points");
        assert!(lo < hi, "axis bounds must be ordered");
        Self { lo, hi, n }
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }
}

/// Full discretization: four state axes, the time step count over the
/// horizon, the control grid, and the slice-retention stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub w: AxisSpec,
    pub h: AxisSpec,
    pub p_f: AxisSpec,
    pub p_b: AxisSpec,
    /// Number of time steps on `[0, horizon]` (grid has `n_time_steps + 1` points).
    pub n_time_steps: usize,
    pub control: AxisSpec,
    /// Every `policy_stride`-th time slice of value and control is retained
    /// for interpolation; 1 keeps everything.
    pub policy_stride: usize,
}

impl GridSpec {
    /// The production grid: state boxes wide enough that the boundaries do
    /// not influence the solution near the initial state, price bounds from
    /// simulated extremes.
    pub fn paper(p: &ModelParams) -> Self {
        Self {
            w: AxisSpec::new(p.w0 / 2.0, 1.1 * p.w_inf, 64),
            h: AxisSpec::new(p.h0 / 10.0, 1.1 * p.h0, 64),
            p_f: AxisSpec::new(0.0019, 0.3856, 32),
            p_b: AxisSpec::new(0.0055, 0.2635, 32),
            n_time_steps: 2048,
            control: AxisSpec::new(0.0, 1.0, 64),
            policy_stride: 16,
        }
    }

    /// Coarse preset for desk-scale runs and tests: same boxes, a quarter
    /// of the resolution per state axis, half the controls.
    pub fn desk(p: &ModelParams) -> Self {
        Self {
            w: AxisSpec::new(p.w0 / 2.0, 1.1 * p.w_inf, 32),
            h: AxisSpec::new(p.h0 / 10.0, 1.1 * p.h0, 32),
            p_f: AxisSpec::new(0.0019, 0.3856, 16),
            p_b: AxisSpec::new(0.0055, 0.2635, 16),
            n_time_steps: 512,
            control: AxisSpec::new(0.0, 1.0, 32),
            policy_stride: 16,
        }
    }

    /// Tiny grid for unit tests.
    #[cfg(test)]
    pub(crate) fn toy(p: &ModelParams, n_state: usize, n_time: usize, n_control: usize) -> Self {
        Self {
            w: AxisSpec::new(p.w0 / 2.0, 1.1 * p.w_inf, n_state),
            h: AxisSpec::new(p.h0 / 10.0, 1.1 * p.h0, n_state),
            p_f: AxisSpec::new(0.0019, 0.3856, n_state),
            p_b: AxisSpec::new(0.0055, 0.2635, n_state),
            n_time_steps: n_time,
            control: AxisSpec::new(0.0, 1.0, n_control),
            policy_stride: 4,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.w.n * self.h.n * self.p_f.n * self.p_b.n
    }

    /// Time step `horizon / n_time_steps`.
    pub fn dt(&self, p: &ModelParams) -> f64 {
        p.horizon / self.n_time_steps as f64
    }

    /// Flat index of node `(i, j, k, l)`; `p_b` varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.h.n + j) * self.p_f.n + k) * self.p_b.n + l
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, a) in [
            ("w", &self.w),
            ("h", &self.h),
            ("p_f", &self.p_f),
            ("p_b", &self.p_b),
            ("control", &self.control),
        ] {
            if a.n < 2 {
                return Err(format!("axis {name} needs at least 2 points"));
            }
            if !(a.lo < a.hi) {
                return Err(format!("axis {name} bounds not ordered: [{}, {}]", a.lo, a.hi));
            }
        }
        if self.n_time_steps == 0 {
            return Err("need at least one time step".into());
        }
        if self.policy_stride == 0 {
            return Err("policy_stride must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn axis_values_span_bounds_homogeneously() {
        let a = AxisSpec::new(1.0, 3.0, 5);
        assert_abs_diff_eq!(a.spacing(), 0.5);
        assert_abs_diff_eq!(a.value(0), 1.0);
        assert_abs_diff_eq!(a.value(4), 3.0);
    }

    #[test]
    fn paper_grid_matches_published_sizes() {
        let p = ModelParams::baseline();
        let g = GridSpec::paper(&p);
        assert_eq!((g.w.n, g.h.n, g.p_f.n, g.p_b.n), (64, 64, 32, 32));
        assert_eq!(g.n_time_steps, 2048);
        assert_eq!(g.control.n, 64);
        assert_abs_diff_eq!(g.w.lo, 0.005);
        assert_abs_diff_eq!(g.w.hi, 3.3, epsilon = 1e-12);
        assert_abs_diff_eq!(g.h.lo, 0.1);
        assert_abs_diff_eq!(g.h.hi, 1.1, epsilon = 1e-12);
        assert!(g.validate().is_ok());
    }
}
