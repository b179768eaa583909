//! Small feedforward networks with analytic input derivatives and
//! parameter gradients.
//!
//! The generator of the pricing PDE needs the value network's time and
//! state gradient plus the two price second derivatives. Those are
//! propagated forward layer by layer as an 8-slot jet per unit
//! `[value, ∂t, ∂w, ∂h, ∂pF, ∂pB, ∂²pF, ∂²pB]`, and the parameter
//! gradient of any loss built on jets is accumulated by propagating the
//! adjoint jet backward through the same recurrence. No computation
//! graph is built; the architecture is fixed-depth and the two passes
//! are written out directly.
//!
//! Inputs are affinely mapped to `[−1, 1]` per dimension (the sampling
//! box is part of the network) and all derivative slots are seeded with
//! the map's scale, so every reported derivative is with respect to
//! physical units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const JET_SLOTS: usize = 8;
/// Jet slot holding the first derivative in input dimension `d`.
#[inline]
fn grad_slot(d: usize) -> usize {
    1 + d
}
const SLOT_D2_PF: usize = 6;
const SLOT_D2_PB: usize = 7;
const DIM_PF: usize = 3;
const DIM_PB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputTransform {
    Identity,
    /// `|y|`; used by control networks to keep rates nonnegative.
    Abs,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("second derivatives require a twice-differentiable activation (got ReLU)")]
    SecondDerivativesOfRelu,
    #[error("input width {got} does not match network input {expected}")]
    InputWidth { got: usize, expected: usize },
}

/// Value of a network together with the derivatives the generator needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    /// Gradient with respect to `(t, w, h, pF, pB)`.
    pub grad: [f64; 5],
    pub d2_pf: f64,
    pub d2_pb: f64,
}

/// Fully connected feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) widths: Vec<usize>,
    pub(crate) activation: Activation,
    pub(crate) output: OutputTransform,
    /// `weights[l]` is `widths[l+1] × widths[l]`, row-major.
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
    pub(crate) input_lo: Vec<f64>,
    pub(crate) input_hi: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform initialization, biases zero, seeded.
    pub fn new(
        widths: &[usize],
        activation: Activation,
        output: OutputTransform,
        input_lo: &[f64],
        input_hi: &[f64],
        seed: u64,
    ) -> Self {
        assert!(widths.len() >= 2, "need input and output layers");
        assert_eq!(input_lo.len(), widths[0]);
        assert_eq!(input_hi.len(), widths[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            widths: widths.to_vec(),
            activation,
            output,
            weights,
            biases,
            input_lo: input_lo.to_vec(),
            input_hi: input_hi.to_vec(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    #[inline]
    fn norm_scale(&self, d: usize) -> f64 {
        2.0 / (self.input_hi[d] - self.input_lo[d])
    }

    #[inline]
    fn normalize(&self, d: usize, x: f64) -> f64 {
        self.norm_scale(d) * (x - self.input_lo[d]) - 1.0
    }

    #[inline]
    fn act(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Activation derivative recovered from the post-activation value.
    #[inline]
    fn act_deriv_from_post(&self, a: f64) -> f64 {
        match self.activation {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar forward pass (single-output networks).
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_width());
        let mut a: Vec<f64> = (0..x.len()).map(|d| self.normalize(d, x[d])).collect();
        let mut z = Vec::new();
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            z.clear();
            z.resize(n_out, 0.0);
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut acc = self.biases[l][o];
                for (wi, ai) in row.iter().zip(a.iter()) {
                    acc += wi * ai;
                }
                z[o] = acc;
            }
            if l + 1 < self.n_layers() {
                for v in z.iter_mut() {
                    *v = self.act(*v);
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        let raw = a[0];
        match self.output {
            OutputTransform::Identity => raw,
            OutputTransform::Abs => raw.abs(),
        }
    }

    /// Single forward pass on many inputs.
    pub fn value_batch(&self, xs: &[[f64; 5]]) -> Vec<f64> {
        use rayon::prelude::*;
        let mut out = Vec::new();
        xs.par_iter().map(|x| self.value(x)).collect_into_vec(&mut out);
        out
    }

    /// Value plus first derivatives with respect to all five inputs and
    /// the two price second derivatives, all in physical units.
    pub fn jet(&self, x: &[f64; 5]) -> Result<Jet, NnError> {
        let mut ws = JetWorkspace::default();
        self.jet_forward(x, &mut ws)?;
        Ok(ws.output_jet(self))
    }

    pub fn jet_batch(&self, xs: &[[f64; 5]]) -> Result<Vec<Jet>, NnError> {
        use rayon::prelude::*;
        if self.activation == Activation::Relu {
            return Err(NnError::SecondDerivativesOfRelu);
        }
        let chunks: Vec<Vec<Jet>> = xs
            .par_chunks(256)
            .map(|chunk| {
                let mut ws = JetWorkspace::default();
                chunk
                    .iter()
                    .map(|x| {
                        self.jet_forward(x, &mut ws).expect("activation checked above");
                        ws.output_jet(self)
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }

    /// Forward jet propagation, keeping pre- and post-activation jets of
    /// every layer in `ws` for a later adjoint pass.
    pub(crate) fn jet_forward(&self, x: &[f64; 5], ws: &mut JetWorkspace) -> Result<(), NnError> {
        if self.activation == Activation::Relu {
            return Err(NnError::SecondDerivativesOfRelu);
        }
        if self.input_width() != 5 {
            return Err(NnError::InputWidth {
                got: 5,
                expected: self.input_width(),
            });
        }
        ws.ensure_shape(self);
        for d in 0..5 {
            let mut seed = [0.0; JET_SLOTS];
            seed[0] = self.normalize(d, x[d]);
            seed[grad_slot(d)] = self.norm_scale(d);
            ws.post[0][d] = seed;
        }
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let last = l + 1 == self.n_layers();
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut z = [0.0; JET_SLOTS];
                z[0] = self.biases[l][o];
                for (i, wi) in row.iter().enumerate() {
                    let a = &ws.post[l][i];
                    for s in 0..JET_SLOTS {
                        z[s] += wi * a[s];
                    }
                }
                ws.pre[l][o] = z;
                ws.post[l + 1][o] = if last { z } else { tanh_jet(&z) };
            }
        }
        Ok(())
    }
}

/// Jet transform of the tanh activation.
#[inline]
fn tanh_jet(z: &[f64; JET_SLOTS]) -> [f64; JET_SLOTS] {
    let a = z[0].tanh();
    let p1 = 1.0 - a * a;
    let p2 = -2.0 * a * p1;
    let mut out = [0.0; JET_SLOTS];
    out[0] = a;
    for s in 1..=5 {
        out[s] = p1 * z[s];
    }
    out[SLOT_D2_PF] = p2 * z[grad_slot(DIM_PF)] * z[grad_slot(DIM_PF)] + p1 * z[SLOT_D2_PF];
    out[SLOT_D2_PB] = p2 * z[grad_slot(DIM_PB)] * z[grad_slot(DIM_PB)] + p1 * z[SLOT_D2_PB];
    out
}

/// Per-point forward state of the jet propagation.
#[derive(Debug, Default, Clone)]
pub(crate) struct JetWorkspace {
    /// `post[0]` are the seeded input jets; `post[l+1]` the jets after layer `l`.
    pub(crate) post: Vec<Vec<[f64; JET_SLOTS]>>,
    /// Pre-activation jets of each layer.
    pub(crate) pre: Vec<Vec<[f64; JET_SLOTS]>>,
}

impl JetWorkspace {
    fn ensure_shape(&mut self, net: &Mlp) {
        if self.post.len() != net.widths.len() {
            self.post = net.widths.iter().map(|&n| vec![[0.0; JET_SLOTS]; n]).collect();
            self.pre = net.widths[1..]
                .iter()
                .map(|&n| vec![[0.0; JET_SLOTS]; n])
                .collect();
        }
    }

    pub(crate) fn output_jet(&self, net: &Mlp) -> Jet {
        let out = &self.post[net.widths.len() - 1][0];
        debug_assert_eq!(net.output, OutputTransform::Identity);
        Jet {
            value: out[0],
            grad: [out[1], out[2], out[3], out[4], out[5]],
            d2_pf: out[SLOT_D2_PF],
            d2_pb: out[SLOT_D2_PB],
        }
    }
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in &mut self.w {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.b {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.w {
            w.iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.b {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Adjoint of an output jet: how much the loss moves per unit of each
/// output slot.
pub type JetAdjoint = [f64; JET_SLOTS];

impl Mlp {
    /// Accumulates `∂L/∂θ` for a loss term whose upstream adjoint on the
    /// output jet is `upstream`, for the point whose forward state is in
    /// `ws` (from [`Mlp::jet_forward`]). tanh + identity output only.
    pub(crate) fn backprop_jet(&self, ws: &JetWorkspace, upstream: &JetAdjoint, grads: &mut GradBuffer) {
        debug_assert_eq!(self.activation, Activation::Tanh);
        debug_assert_eq!(self.output, OutputTransform::Identity);
        let n_layers = self.n_layers();
        // adjoint of the post-activation jets of the current layer input
        let mut a_bar: Vec<[f64; JET_SLOTS]> = vec![*upstream];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let last = l + 1 == n_layers;
            // adjoint of pre-activation jets
            let mut z_bar = vec![[0.0; JET_SLOTS]; n_out];
            for o in 0..n_out {
                if last {
                    z_bar[o] = a_bar[o];
                    continue;
                }
                let z = &ws.pre[l][o];
                let a = ws.post[l + 1][o][0];
                let p1 = 1.0 - a * a;
                let p2 = -2.0 * a * p1;
                let p3 = p1 * (6.0 * a * a - 2.0);
                let ab = &a_bar[o];
                let mut v_bar = ab[0] * p1;
                for s in 1..=5 {
                    v_bar += ab[s] * p2 * z[s];
                    z_bar[o][s] += ab[s] * p1;
                }
                let zf = z[grad_slot(DIM_PF)];
                let zb = z[grad_slot(DIM_PB)];
                v_bar += ab[SLOT_D2_PF] * (p3 * zf * zf + p2 * z[SLOT_D2_PF]);
                v_bar += ab[SLOT_D2_PB] * (p3 * zb * zb + p2 * z[SLOT_D2_PB]);
                z_bar[o][grad_slot(DIM_PF)] += ab[SLOT_D2_PF] * 2.0 * p2 * zf;
                z_bar[o][grad_slot(DIM_PB)] += ab[SLOT_D2_PB] * 2.0 * p2 * zb;
                z_bar[o][SLOT_D2_PF] += ab[SLOT_D2_PF] * p1;
                z_bar[o][SLOT_D2_PB] += ab[SLOT_D2_PB] * p1;
                z_bar[o][0] = v_bar;
            }
            // affine adjoint
            let mut prev_bar = vec![[0.0; JET_SLOTS]; n_in];
            for o in 0..n_out {
                let zb = &z_bar[o];
                grads.b[l][o] += zb[0];
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let grow = &mut grads.w[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    let a = &ws.post[l][i];
                    let mut acc = 0.0;
                    for s in 0..JET_SLOTS {
                        acc += zb[s] * a[s];
                        prev_bar[i][s] += row[i] * zb[s];
                    }
                    grow[i] += acc;
                }
            }
            a_bar = prev_bar;
        }
    }

    /// Standard first-order backprop: accumulates `upstream · ∂out/∂θ`
    /// and returns the forward value. Supports both activations and both
    /// output transforms.
    pub fn backprop_value(&self, x: &[f64], upstream: f64, grads: &mut GradBuffer) -> f64 {
        debug_assert_eq!(x.len(), self.input_width());
        let n_layers = self.n_layers();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push((0..x.len()).map(|d| self.normalize(d, x[d])).collect());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut acc = self.biases[l][o];
                for (wi, ai) in row.iter().zip(prev.iter()) {
                    acc += wi * ai;
                }
                z[o] = if l + 1 < n_layers { self.act(acc) } else { acc };
            }
            acts.push(z);
        }
        let raw = acts[n_layers][0];
        let value = match self.output {
            OutputTransform::Identity => raw,
            OutputTransform::Abs => raw.abs(),
        };
        let mut up = upstream;
        if self.output == OutputTransform::Abs && raw < 0.0 {
            up = -up;
        }
        let mut delta = vec![up];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let mut prev_delta = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads.b[l][o] += d;
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let grow = &mut grads.w[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * acts[l][i];
                    prev_delta[i] += d * row[i];
                }
            }
            if l > 0 {
                for (pd, a) in prev_delta.iter_mut().zip(acts[l].iter()) {
                    *pd *= self.act_deriv_from_post(*a);
                }
            }
            delta = prev_delta;
        }
        value
    }

    /// Weight count of one layer (gradient-check support).
    pub fn weights_len(&self, layer: usize) -> usize {
        self.weights[layer].len()
    }

    /// Adds `delta` to one weight (gradient-check support).
    pub fn perturb_weight(&mut self, layer: usize, pos: usize, delta: f64) {
        self.weights[layer][pos] += delta;
    }

    /// Flat views used by the optimizer.
    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flat_map(|w| w.iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }
}

impl GradBuffer {
    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().flat_map(|w| w.iter()).chain(self.b.iter().flat_map(|b| b.iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn unit_box(dim: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; dim], vec![1.0; dim])
    }

    fn small_net(seed: u64) -> Mlp {
        let (lo, hi) = unit_box(5);
        Mlp::new(&[5, 4, 3, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let (lo, hi) = unit_box(5);
        let mut net = Mlp::new(&[5, 8, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 1);
        for w in &mut net.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_abs_diff_eq!(net.value(&[0.3, -0.2, 0.9, 0.1, -0.5]), 0.0);
    }

    #[test]
    fn single_affine_layer_is_a_matrix_product() {
        let (lo, hi) = unit_box(2);
        let mut net = Mlp::new(&[2, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 3);
        net.weights[0] = vec![2.0, -1.5];
        net.biases[0] = vec![0.25];
        // unit box keeps normalization the identity
        let x = [0.4, 0.8];
        assert_abs_diff_eq!(net.value(&x), 2.0 * 0.4 - 1.5 * 0.8 + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn abs_output_is_nonnegative() {
        let (lo, hi) = unit_box(5);
        let net = Mlp::new(&[5, 16, 1], Activation::Relu, OutputTransform::Abs, &lo, &hi, 7);
        for k in 0..50 {
            let t = k as f64 / 25.0 - 1.0;
            let x = [t, -t, t * t, 0.3, -0.7];
            assert!(net.value(&x) >= 0.0);
        }
    }

    #[test]
    fn jet_gradient_matches_finite_differences() {
        let boxes = [
            (vec![0.0, 0.005, 0.1, 0.0019, 0.0055], vec![3.0, 3.3, 1.1, 0.3856, 0.2635]),
            unit_box(5),
        ];
        for (seed, (lo, hi)) in boxes.into_iter().enumerate() {
            let net = Mlp::new(
                &[5, 6, 5, 1],
                Activation::Tanh,
                OutputTransform::Identity,
                &lo,
                &hi,
                seed as u64 + 11,
            );
            let x: [f64; 5] = std::array::from_fn(|d| 0.3 * lo[d] + 0.7 * hi[d]);
            let jet = net.jet(&x).unwrap();
            assert_abs_diff_eq!(jet.value, net.value(&x), epsilon = 1e-14);
            for d in 0..5 {
                let h = 1e-5 * (hi[d] - lo[d]);
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (net.value(&xp) - net.value(&xm)) / (2.0 * h);
                assert_relative_eq!(jet.grad[d], fd, epsilon = 1e-8, max_relative = 1e-5);
            }
            for (d, d2) in [(3, jet.d2_pf), (4, jet.d2_pb)] {
                let h = 1e-4 * (hi[d] - lo[d]);
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (net.value(&xp) - 2.0 * net.value(&x) + net.value(&xm)) / (h * h);
                assert_relative_eq!(d2, fd, epsilon = 1e-6, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn affine_net_has_constant_gradient_and_zero_curvature() {
        let (lo, hi) = unit_box(5);
        let mut net = Mlp::new(&[5, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 5);
        net.weights[0] = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        net.biases[0] = vec![-0.5];
        let jet = net.jet(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        for d in 0..5 {
            assert_abs_diff_eq!(jet.grad[d], (d + 1) as f64, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(jet.d2_pf, 0.0);
        assert_abs_diff_eq!(jet.d2_pb, 0.0);
    }

    #[test]
    fn hidden_unit_permutation_leaves_derivatives_unchanged() {
        let (lo, hi) = unit_box(5);
        let mut net = Mlp::new(&[5, 4, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 13);
        let x = [0.3, -0.1, 0.8, 0.2, -0.6];
        let before = net.jet(&x).unwrap();
        // swap hidden units 0 and 2 together with their weights
        for i in 0..5 {
            net.weights[0].swap(i, 2 * 5 + i);
        }
        net.biases[0].swap(0, 2);
        net.weights[1].swap(0, 2);
        let after = net.jet(&x).unwrap();
        assert_abs_diff_eq!(before.value, after.value, epsilon = 1e-14);
        for d in 0..5 {
            assert_abs_diff_eq!(before.grad[d], after.grad[d], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(before.d2_pf, after.d2_pf, epsilon = 1e-14);
    }

    #[test]
    fn relu_jets_are_rejected() {
        let (lo, hi) = unit_box(5);
        let net = Mlp::new(&[5, 4, 1], Activation::Relu, OutputTransform::Identity, &lo, &hi, 1);
        assert!(matches!(net.jet(&[0.0; 5]), Err(NnError::SecondDerivativesOfRelu)));
    }

    #[test]
    fn value_backprop_bias_gradient_of_mean_loss() {
        // loss = mean of outputs over a batch, single affine layer:
        // ∂L/∂bias = 1.
        let (lo, hi) = unit_box(5);
        let net = Mlp::new(&[5, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 2);
        let batch = [[0.1; 5], [0.6; 5], [-0.3; 5], [0.9; 5]];
        let mut grads = GradBuffer::zeros_like(&net);
        for x in &batch {
            net.backprop_value(x, 1.0 / batch.len() as f64, &mut grads);
        }
        assert_abs_diff_eq!(grads.b[0][0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = small_net(17);
        let mut grads = GradBuffer::zeros_like(&net);
        net.backprop_value(&[0.1, 0.2, 0.3, 0.4, 0.5], 0.0, &mut grads);
        assert!(grads.params().all(|&g| g == 0.0));
    }

    #[test]
    fn value_backprop_matches_finite_differences() {
        // loss = mean over a batch of v² for both activations and outputs
        let (lo, hi) = unit_box(5);
        for (act, out) in [
            (Activation::Tanh, OutputTransform::Identity),
            (Activation::Relu, OutputTransform::Abs),
        ] {
            let net = Mlp::new(&[5, 6, 1], act, out, &lo, &hi, 23);
            let batch: Vec<[f64; 5]> =
                (0..8).map(|k| std::array::from_fn(|d| ((k * 5 + d) as f64 * 0.37).sin() * 0.8)).collect();
            let loss = |n: &Mlp| -> f64 {
                batch.iter().map(|x| n.value(x).powi(2)).sum::<f64>() / batch.len() as f64
            };
            let mut grads = GradBuffer::zeros_like(&net);
            for x in &batch {
                let v = net.value(x);
                net.backprop_value(x, 2.0 * v / batch.len() as f64, &mut grads);
            }
            let flat: Vec<f64> = grads.params().copied().collect();
            let mut idx = 0;
            let h = 1e-6;
            for layer in 0..net.n_layers() {
                for pos in 0..net.weights[layer].len() {
                    let mut np = net.clone();
                    np.weights[layer][pos] += h;
                    let mut nm = net.clone();
                    nm.weights[layer][pos] -= h;
                    let fd = (loss(&np) - loss(&nm)) / (2.0 * h);
                    assert_relative_eq!(flat[idx], fd, epsilon = 1e-7, max_relative = 1e-4);
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn jet_backprop_matches_finite_differences_on_a_jet_functional() {
        // synthetic loss touching every jet slot:
        // L = mean((V_t + 2 V_w − 0.5 V_h + 3 V_pF − V_pB + 4 V_pFpF + 0.7 V_pBpB − V)²)
        let coeff: JetAdjoint = [-1.0, 1.0, 2.0, -0.5, 3.0, -1.0, 4.0, 0.7];
        let (lo, hi) = (
            vec![0.0, 0.005, 0.1, 0.0019, 0.0055],
            vec![3.0, 3.3, 1.1, 0.3856, 0.2635],
        );
        let net = Mlp::new(&[5, 5, 4, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 31);
        let batch: Vec<[f64; 5]> = (0..6)
            .map(|k| std::array::from_fn(|d| lo[d] + (0.15 + 0.1 * ((k + d) as f64 % 7.0)) * (hi[d] - lo[d])))
            .collect();
        let functional = |n: &Mlp| -> f64 {
            batch
                .iter()
                .map(|x| {
                    let j = n.jet(x).unwrap();
                    let slots = [j.value, j.grad[0], j.grad[1], j.grad[2], j.grad[3], j.grad[4], j.d2_pf, j.d2_pb];
                    let r: f64 = slots.iter().zip(coeff.iter()).map(|(s, c)| s * c).sum();
                    r * r
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let mut grads = GradBuffer::zeros_like(&net);
        let mut ws = JetWorkspace::default();
        for x in &batch {
            net.jet_forward(x, &mut ws).unwrap();
            let j = ws.output_jet(&net);
            let slots = [j.value, j.grad[0], j.grad[1], j.grad[2], j.grad[3], j.grad[4], j.d2_pf, j.d2_pb];
            let r: f64 = slots.iter().zip(coeff.iter()).map(|(s, c)| s * c).sum();
            let scale = 2.0 * r / batch.len() as f64;
            let upstream: JetAdjoint = std::array::from_fn(|s| scale * coeff[s]);
            net.backprop_jet(&ws, &upstream, &mut grads);
        }
        let flat: Vec<f64> = grads.params().copied().collect();
        // finite differences over every parameter, weights then biases
        let mut fd_flat = Vec::new();
        let h = 1e-6;
        for layer in 0..net.n_layers() {
            for pos in 0..net.weights[layer].len() {
                let mut np = net.clone();
                np.weights[layer][pos] += h;
                let mut nm = net.clone();
                nm.weights[layer][pos] -= h;
                fd_flat.push((functional(&np) - functional(&nm)) / (2.0 * h));
            }
        }
        for layer in 0..net.n_layers() {
            for pos in 0..net.biases[layer].len() {
                let mut np = net.clone();
                np.biases[layer][pos] += h;
                let mut nm = net.clone();
                nm.biases[layer][pos] -= h;
                fd_flat.push((functional(&np) - functional(&nm)) / (2.0 * h));
            }
        }
        assert!(net.n_params() <= 200);
        for (an, fd) in flat.iter().zip(fd_flat.iter()) {
            assert_relative_eq!(an, fd, epsilon = 1e-7, max_relative = 1e-3);
        }
    }

    #[test]
    fn same_seed_same_network() {
        let a = small_net(99);
        let b = small_net(99);
        assert_eq!(a, b);
        let c = small_net(100);
        assert_ne!(a, c);
    }

    #[test]
    fn outputs_and_derivatives_finite_well_outside_the_box() {
        let (lo, hi) = (
            vec![0.0, 0.005, 0.1, 0.0019, 0.0055],
            vec![3.0, 3.3, 1.1, 0.3856, 0.2635],
        );
        let net = Mlp::new(&[5, 32, 32, 32, 1], Activation::Tanh, OutputTransform::Identity, &lo, &hi, 42);
        for mult in [-10.0, 10.0] {
            let x: [f64; 5] = std::array::from_fn(|d| lo[d] + mult * (hi[d] - lo[d]));
            let jet = net.jet(&x).unwrap();
            assert!(jet.value.is_finite());
            assert!(jet.grad.iter().all(|g| g.is_finite()));
            assert!(jet.d2_pf.is_finite() && jet.d2_pb.is_finite());
        }
    }
}
