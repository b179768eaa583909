//! Short free-boundary training demo: a few hundred epochs of the value
//! network with the feedback control, loss trace, and residual spot
//! checks. Production runs live behind `aquafarm pinn-train`.
//!
//! ```sh
//! cargo run --release --example pinn_train
//! ```

use std::time::Instant;

use aquafarm::fd::GridSpec;
use aquafarm::model::{FeedingStrategy, ModelParams};
use aquafarm::pinn::{
    exercise_value, train_value, ControlApproach, PinnConfig, SamplingBox,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let bounds = SamplingBox::from_grid(&GridSpec::desk(&p), &p);
    let mut cfg = PinnConfig::desk(bounds);
    cfg.epochs = 400;
    cfg.batch = 512;
    cfg.seed = 7;

    let t0 = Instant::now();
    let sol = train_value(&cfg, ControlApproach::Feedback, &p, &s).unwrap();
    println!("{} epochs in {:.1?}", cfg.epochs, t0.elapsed());
    for r in sol.loss_history.iter().step_by(50) {
        println!(
            "epoch {:4}  lr {:.2e}  pde {:.3e}  boundary {:.3e}  terminal {:.3e}",
            r.epoch, r.lr, r.pde, r.boundary, r.terminal
        );
    }

    // how well the terminal condition is met on fresh points
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let rmse: f64 = (0..n)
        .map(|_| {
            let mut x = bounds.sample(&mut rng);
            x[0] = p.horizon;
            (sol.value_net.value(&x) - exercise_value(&x)).powi(2)
        })
        .sum::<f64>()
        / n as f64;
    println!("terminal RMSE on fresh points: {:.3e}", rmse.sqrt());

    let x0 = [0.0, p.w0, p.h0, p.p_f0, p.p_b0];
    let mut x0_rich = x0;
    x0_rich[4] *= 2.0;
    println!(
        "V(0, x0) = {:.4}; doubling the biomass price gives {:.4}",
        sol.value_net.value(&x0),
        sol.value_net.value(&x0_rich)
    );
    let _ = rng.gen::<f64>();
}
