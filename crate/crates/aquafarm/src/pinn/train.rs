//! Free-boundary training of the value network, with the three control
//! sources: closed-form feedback, a control network trained on the mean
//! Hamiltonian error, and a control network trained against a control
//! grid.
//!
//! Each epoch draws balanced region batches, takes one Adam step on the
//! value network for `MSE(L_PDE) + MSE(L_FB) + MSE(L_T)`, and for the
//! network-control approaches five inner Adam steps on the control
//! network at a fixed learning rate. The feedback control enters the PDE
//! loss with its gradient stopped: at an interior optimum the first-order
//! condition zeroes that path, and at a clamped endpoint the projection
//! does, so the omission is exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::feedback::feedback_control;
use super::residual::{exercise_value, generator_plus_cost, pde_residual_at, point_state, Point};
use super::sampling::{sample_regions, SamplingBox, SamplingError};
use crate::model::{FeedingStrategy, ModelParams};
use crate::nn::{adam_step, AdamState, Activation, GradBuffer, Jet, Mlp, NnError, OutputTransform};
use crate::nn::{JetAdjoint, JetWorkspace};

/// How the control entering the PDE (and the evaluated policy) is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlApproach {
    /// Closed-form feedback from the value network's derivatives.
    Feedback,
    /// Control network minimizing the mean negative Hamiltonian.
    MeanError,
    /// Control network trained to match the best control on a fixed grid.
    HingeGrid,
}

impl ControlApproach {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Feedback => "u1",
            Self::MeanError => "u2",
            Self::HingeGrid => "u3",
        }
    }
}

/// Training configuration; defaults follow the full-scale run, the desk
/// preset shrinks `epochs`, `batch` and `control_grid`.
#[derive(Debug, Clone)]
pub struct PinnConfig {
    pub bounds: SamplingBox,
    pub epochs: usize,
    pub batch: usize,
    pub fuzzy_eps: f64,
    pub inner_steps: usize,
    pub inner_lr: f64,
    /// Control-grid size `m` for the grid-hinge approach.
    pub control_grid: usize,
    /// Threshold `ε` of the value-based stopping rule.
    pub stop_eps: f64,
    pub lr0: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Keep the literal `−(ŷ−y)⁺` objective instead of the shortfall.
    pub literal_hinge: bool,
    pub max_sample_rounds: usize,
}

impl PinnConfig {
    pub fn paper(bounds: SamplingBox) -> Self {
        Self {
            bounds,
            epochs: 10_000,
            batch: 4096,
            fuzzy_eps: 0.01,
            inner_steps: 5,
            inner_lr: 5e-4,
            control_grid: 64,
            stop_eps: 0.01,
            lr0: 5e-3,
            hidden: vec![32, 32, 32],
            seed: 0,
            literal_hinge: false,
            max_sample_rounds: 256,
        }
    }

    pub fn desk(bounds: SamplingBox) -> Self {
        Self {
            epochs: 2000,
            batch: 1024,
            control_grid: 32,
            ..Self::paper(bounds)
        }
    }

    fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * 0.5f64.powi((epoch / 1000) as i32)
    }
}

/// Per-epoch loss components.
#[derive(Debug, Clone, Copy)]
pub struct LossRecord {
    pub epoch: usize,
    pub lr: f64,
    pub pde: f64,
    pub boundary: f64,
    pub terminal: f64,
    pub control: Option<f64>,
}

impl LossRecord {
    pub fn total(&self) -> f64 {
        self.pde + self.boundary + self.terminal
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("training diverged at epoch {epoch}: loss {loss:.3e} exceeds 1e3 × reference {reference:.3e}")]
    Diverged {
        epoch: usize,
        loss: f64,
        reference: f64,
    },
}

/// Trained networks plus the loss history.
#[derive(Debug, Clone)]
pub struct PinnSolution {
    pub approach: ControlApproach,
    pub value_net: Mlp,
    pub control_net: Option<Mlp>,
    pub bounds: SamplingBox,
    pub stop_eps: f64,
    pub loss_history: Vec<LossRecord>,
}

const GRAD_CHUNK: usize = 256;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Accumulates `∂/∂θ` of `MSE(L_PDE)` over a batch with frozen controls
/// into `grads` and returns the loss (exposed for gradient checks).
pub fn accumulate_pde_gradients(
    net: &Mlp,
    points: &[Point],
    controls: &[f64],
    p: &ModelParams,
    s: &FeedingStrategy,
    grads: &mut GradBuffer,
) -> f64 {
    let n_c = points.len() as f64;
    let parts: Vec<(f64, GradBuffer)> = points
        .par_chunks(GRAD_CHUNK)
        .zip(controls.par_chunks(GRAD_CHUNK))
        .map(|(xs, us)| {
            let mut local = GradBuffer::zeros_like(net);
            let mut ws = JetWorkspace::default();
            let mut sq_sum = 0.0;
            for (x, &u) in xs.iter().zip(us.iter()) {
                net.jet_forward(x, &mut ws).expect("value net supports jets");
                let jet = ws.output_jet(net);
                let r = pde_residual_at(&jet, x, u, p, s);
                sq_sum += r * r;
                let (t, w, h, pf, pb) = (x[0], x[1], x[2], x[3], x[4]);
                let f = s.rate(t);
                let scale = 2.0 * r / n_c;
                let upstream: JetAdjoint = [
                    scale * (-p.r),
                    scale,
                    scale * crate::model::weight_drift(w, f, u, p),
                    scale * crate::model::population_drift(h, f, u, p),
                    scale * p.r * pf,
                    scale * p.r * pb,
                    scale * 0.5 * (p.sigma_f * pf).powi(2),
                    scale * 0.5 * (p.sigma_b * pb).powi(2),
                ];
                net.backprop_jet(&ws, &upstream, &mut local);
            }
            (sq_sum, local)
        })
        .collect();
    let mut pde_loss = 0.0;
    for (sq, local) in &parts {
        pde_loss += sq;
        grads.add_assign(local);
    }
    pde_loss / n_c
}

/// Accumulates value-network gradients of the three loss terms for one
/// epoch and returns `(L_PDE, L_FB, L_T)`.
fn value_losses_and_grads(
    net: &Mlp,
    cont: &[Point],
    controls: &[f64],
    boundary: &[Point],
    terminal: &[Point],
    p: &ModelParams,
    s: &FeedingStrategy,
    grads: &mut GradBuffer,
) -> (f64, f64, f64) {
    let pde_loss = accumulate_pde_gradients(net, cont, controls, p, s, grads);

    let mut fit_loss = |points: &[Point]| -> f64 {
        let n = points.len() as f64;
        let parts: Vec<(f64, GradBuffer)> = points
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut local = GradBuffer::zeros_like(net);
                let mut sq_sum = 0.0;
                for x in chunk {
                    let diff = net.value(x) - exercise_value(x);
                    sq_sum += diff * diff;
                    net.backprop_value(x, 2.0 * diff / n, &mut local);
                }
                (sq_sum, local)
            })
            .collect();
        let mut loss = 0.0;
        for (sq, local) in &parts {
            loss += sq;
            grads.add_assign(local);
        }
        loss / n
    };
    let fb_loss = fit_loss(boundary);
    let t_loss = fit_loss(terminal);
    (pde_loss, fb_loss, t_loss)
}

/// `∂(L^u V + k)/∂u` at a point.
#[inline]
fn hamiltonian_du(jet: &Jet, x: &Point, u: f64, feed_rate: f64, p: &ModelParams) -> f64 {
    let (w, h, pf) = (x[1], x[2], x[3]);
    let geom = 1.0 - (w / p.w_inf).powf(p.nu);
    let miss = feed_rate - u;
    jet.grad[1] * 2.0 * p.gamma_f * miss * w * geom + jet.grad[2] * 2.0 * p.mu_f * miss * h - h * pf
}

/// Mean negative Hamiltonian `mean(−(L^u V + k))` over a batch with the
/// controls evaluated pointwise (the mean-error control objective).
pub fn control_loss_mean_error(
    jets: &[Jet],
    points: &[Point],
    controls: &[f64],
    p: &ModelParams,
    s: &FeedingStrategy,
) -> f64 {
    let n = points.len() as f64;
    points
        .iter()
        .zip(jets.iter())
        .zip(controls.iter())
        .map(|((x, jet), &u)| -generator_plus_cost(jet, x, u, p, s))
        .sum::<f64>()
        / n
}

/// Grid-hinge control objective. Returns the mean shortfall
/// `mean((ŷ − y)⁺)` (or its negation in literal mode), where `ŷ` is the
/// best Hamiltonian on an `m`-point control grid and `y` the network
/// control's Hamiltonian.
pub fn control_loss_hinge(
    jets: &[Jet],
    points: &[Point],
    controls: &[f64],
    m: usize,
    literal: bool,
    p: &ModelParams,
    s: &FeedingStrategy,
) -> f64 {
    assert!(m >= 2);
    let n = points.len() as f64;
    let sum: f64 = points
        .iter()
        .zip(jets.iter())
        .zip(controls.iter())
        .map(|((x, jet), &u)| {
            let y_hat = grid_best_hamiltonian(jet, x, m, p, s).0;
            let y = generator_plus_cost(jet, x, u, p, s);
            (y_hat - y).max(0.0)
        })
        .sum();
    let shortfall = sum / n;
    if literal {
        -shortfall
    } else {
        shortfall
    }
}

/// Best Hamiltonian and its control on an `m`-point grid over `[0, ū]`.
fn grid_best_hamiltonian(jet: &Jet, x: &Point, m: usize, p: &ModelParams, s: &FeedingStrategy) -> (f64, f64) {
    let du = p.u_bar / (m - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_u = 0.0;
    for k in 0..m {
        let u = k as f64 * du;
        let v = generator_plus_cost(jet, x, u, p, s);
        if v > best {
            best = v;
            best_u = u;
        }
    }
    (best, best_u)
}

/// One Adam step on the control network; returns the recorded loss.
#[allow(clippy::too_many_arguments)]
fn control_step(
    control_net: &mut Mlp,
    ctrl_state: &mut AdamState,
    jets: &[Jet],
    points: &[Point],
    approach: ControlApproach,
    cfg: &PinnConfig,
    p: &ModelParams,
    s: &FeedingStrategy,
) -> f64 {
    let n = points.len() as f64;
    let net_ref: &Mlp = control_net;
    let parts: Vec<(f64, GradBuffer)> = points
        .par_chunks(GRAD_CHUNK)
        .zip(jets.par_chunks(GRAD_CHUNK))
        .map(|(xs, js)| {
            let mut local = GradBuffer::zeros_like(net_ref);
            let mut loss_sum = 0.0;
            for (x, jet) in xs.iter().zip(js.iter()) {
                let raw = net_ref.value(x);
                let u = raw.min(p.u_bar);
                let clamped = raw > p.u_bar;
                let f = s.rate(x[0]);
                let dh_du = hamiltonian_du(jet, x, u, f, p);
                let upstream = match approach {
                    ControlApproach::MeanError => {
                        loss_sum += -generator_plus_cost(jet, x, u, p, s);
                        -dh_du / n
                    }
                    ControlApproach::HingeGrid => {
                        let (y_hat, _) = grid_best_hamiltonian(jet, x, cfg.control_grid, p, s);
                        let y = generator_plus_cost(jet, x, u, p, s);
                        let shortfall = (y_hat - y).max(0.0);
                        let active = y_hat > y;
                        if cfg.literal_hinge {
                            loss_sum += -shortfall;
                            if active {
                                dh_du / n
                            } else {
                                0.0
                            }
                        } else {
                            loss_sum += shortfall;
                            if active {
                                -dh_du / n
                            } else {
                                0.0
                            }
                        }
                    }
                    ControlApproach::Feedback => unreachable!("feedback has no control network"),
                };
                if !clamped && upstream != 0.0 {
                    net_ref.backprop_value(x, upstream, &mut local);
                }
            }
            (loss_sum, local)
        })
        .collect();
    let mut grads = GradBuffer::zeros_like(control_net);
    let mut loss = 0.0;
    for (l, local) in &parts {
        loss += l;
        grads.add_assign(local);
    }
    adam_step(control_net, &grads, ctrl_state, cfg.inner_lr);
    loss / n
}

/// Trains the value network (and, for the network-control approaches,
/// the control network) on the free-boundary formulation.
pub fn train_value(
    cfg: &PinnConfig,
    approach: ControlApproach,
    p: &ModelParams,
    s: &FeedingStrategy,
) -> Result<PinnSolution, TrainError> {
    let mut widths = vec![5];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);
    let mut value_net = Mlp::new(
        &widths,
        Activation::Tanh,
        OutputTransform::Identity,
        &cfg.bounds.lo,
        &cfg.bounds.hi,
        derive_seed(cfg.seed, 0),
    );
    let mut value_state = AdamState::new(&value_net);
    let mut control = match approach {
        ControlApproach::Feedback => None,
        _ => {
            let net = Mlp::new(
                &widths,
                Activation::Relu,
                OutputTransform::Abs,
                &cfg.bounds.lo,
                &cfg.bounds.hi,
                derive_seed(cfg.seed, 1),
            );
            let state = AdamState::new(&net);
            Some((net, state))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut reference_loss = f64::INFINITY;

    for epoch in 0..cfg.epochs {
        let regions = sample_regions(
            &value_net,
            &cfg.bounds,
            cfg.batch,
            cfg.fuzzy_eps,
            cfg.max_sample_rounds,
            &mut rng,
        )?;

        // controls on the continuation batch, frozen for the value step
        let controls: Vec<f64> = match (&approach, &control) {
            (ControlApproach::Feedback, _) => {
                let jets = value_net.jet_batch(&regions.continuation)?;
                regions
                    .continuation
                    .iter()
                    .zip(jets.iter())
                    .map(|(x, jet)| {
                        feedback_control(jet.grad[1], jet.grad[2], x[0], &point_state(x), s, p)
                    })
                    .collect()
            }
            (_, Some((net, _))) => regions
                .continuation
                .iter()
                .map(|x| net.value(x).min(p.u_bar))
                .collect(),
            _ => unreachable!(),
        };

        let mut grads = GradBuffer::zeros_like(&value_net);
        let (pde, fb, term) = value_losses_and_grads(
            &value_net,
            &regions.continuation,
            &controls,
            &regions.boundary,
            &regions.terminal,
            p,
            s,
            &mut grads,
        );
        adam_step(&mut value_net, &grads, &mut value_state, cfg.lr(epoch));

        let mut ctrl_loss = None;
        if let Some((net, state)) = control.as_mut() {
            // the value network moved: refresh the jets shared by the
            // inner control steps
            let jets = value_net.jet_batch(&regions.continuation)?;
            let mut last = 0.0;
            for _ in 0..cfg.inner_steps {
                last = control_step(net, state, &jets, &regions.continuation, approach, cfg, p, s);
            }
            ctrl_loss = Some(last);
        }

        let record = LossRecord {
            epoch,
            lr: cfg.lr(epoch),
            pde,
            boundary: fb,
            terminal: term,
            control: ctrl_loss,
        };
        if epoch == 10 {
            reference_loss = record.total();
        }
        if epoch > 10 && record.total() > 1e3 * reference_loss {
            return Err(TrainError::Diverged {
                epoch,
                loss: record.total(),
                reference: reference_loss,
            });
        }
        history.push(record);
    }

    Ok(PinnSolution {
        approach,
        value_net,
        control_net: control.map(|(net, _)| net),
        bounds: cfg.bounds,
        stop_eps: cfg.stop_eps,
        loss_history: history,
    })
}
