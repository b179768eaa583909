//! Multilinear interpolation of the retained value/control slices:
//! linear in each of the four state dimensions, linear in time between
//! retained slices, clamped to the grid box outside it.

use super::grid::{AxisSpec, GridSpec};
use super::solver::FdSolution;
use crate::model::FarmState;

/// Cell index and fractional offset along one axis, clamped to the box.
#[inline]
fn locate(axis: &AxisSpec, x: f64) -> (usize, f64) {
    let pos = (x - axis.lo) / axis.spacing();
    if pos <= 0.0 {
        return (0, 0.0);
    }
    let max_cell = axis.n - 2;
    if pos >= (axis.n - 1) as f64 {
        return (max_cell, 1.0);
    }
    let cell = (pos.floor() as usize).min(max_cell);
    (cell, pos - cell as f64)
}

/// 4-D multilinear interpolation of one stored slice.
pub(crate) fn interp4(slice: &[f32], grid: &GridSpec, state: &FarmState) -> f64 {
    let (iw, fw) = locate(&grid.w, state.w);
    let (ih, fh) = locate(&grid.h, state.h);
    let (ik, fk) = locate(&grid.p_f, state.p_f);
    let (il, fl) = locate(&grid.p_b, state.p_b);
    let mut acc = 0.0;
    for (di, wi) in [(0, 1.0 - fw), (1, fw)] {
        if wi == 0.0 {
            continue;
        }
        for (dj, wj) in [(0, 1.0 - fh), (1, fh)] {
            if wj == 0.0 {
                continue;
            }
            for (dk, wk) in [(0, 1.0 - fk), (1, fk)] {
                if wk == 0.0 {
                    continue;
                }
                for (dl, wl) in [(0, 1.0 - fl), (1, fl)] {
                    if wl == 0.0 {
                        continue;
                    }
                    let idx = grid.index(iw + di, ih + dj, ik + dk, il + dl);
                    acc += wi * wj * wk * wl * slice[idx] as f64;
                }
            }
        }
    }
    acc
}

/// Same interpolation on an f64 working slice (used for `V(0, x0)`).
pub(crate) fn interp4_f64(slice: &[f64], grid: &GridSpec, state: &FarmState) -> f64 {
    let (iw, fw) = locate(&grid.w, state.w);
    let (ih, fh) = locate(&grid.h, state.h);
    let (ik, fk) = locate(&grid.p_f, state.p_f);
    let (il, fl) = locate(&grid.p_b, state.p_b);
    let mut acc = 0.0;
    for (di, wi) in [(0, 1.0 - fw), (1, fw)] {
        for (dj, wj) in [(0, 1.0 - fh), (1, fh)] {
            for (dk, wk) in [(0, 1.0 - fk), (1, fk)] {
                for (dl, wl) in [(0, 1.0 - fl), (1, fl)] {
                    let wgt = wi * wj * wk * wl;
                    if wgt == 0.0 {
                        continue;
                    }
                    acc += wgt * slice[grid.index(iw + di, ih + dj, ik + dk, il + dl)];
                }
            }
        }
    }
    acc
}

impl FdSolution {
    /// Bracketing retained slices and the time fraction for a query time.
    fn time_bracket(&self, t: f64) -> (usize, usize, f64) {
        let step_f = (t / self.dt).clamp(0.0, self.n_steps as f64);
        let hi = self
            .retained_steps
            .partition_point(|&s| (s as f64) < step_f)
            .min(self.retained_steps.len() - 1);
        if hi == 0 {
            return (0, 0, 0.0);
        }
        let lo = hi - 1;
        let s0 = self.retained_steps[lo] as f64;
        let s1 = self.retained_steps[hi] as f64;
        ((lo), (hi), (step_f - s0) / (s1 - s0))
    }

    /// Interpolated value `V(t, x)`: multilinear in the state, linear in
    /// time between retained slices, clamped outside the grid box.
    pub fn value_at(&self, t: f64, state: &FarmState) -> f64 {
        let (lo, hi, alpha) = self.time_bracket(t);
        let v0 = interp4(&self.values[lo], &self.grid, state);
        if lo == hi || alpha == 0.0 {
            return v0;
        }
        let v1 = interp4(&self.values[hi], &self.grid, state);
        (1.0 - alpha) * v0 + alpha * v1
    }

    /// Interpolated argmax control at `(t, x)`.
    pub fn policy_at(&self, t: f64, state: &FarmState) -> f64 {
        let (lo, hi, alpha) = self.time_bracket(t);
        let u0 = interp4(&self.policies[lo], &self.grid, state);
        if lo == hi || alpha == 0.0 {
            return u0;
        }
        let u1 = interp4(&self.policies[hi], &self.grid, state);
        (1.0 - alpha) * u0 + alpha * u1
    }
}
