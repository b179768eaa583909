//! Trains a deep stopping rule for the biological feeding policy on a
//! modest batch and compares the learned rule against the best fixed
//! harvest time, in and out of sample.
//!
//! ```sh
//! cargo run --release --example deepos_train
//! ```

use std::time::Instant;

use aquafarm::deepos::{train_deepos, DeepOsConfig};
use aquafarm::fd::GridSpec;
use aquafarm::model::{BiologicalControl, FeedingStrategy, ModelParams};
use aquafarm::paths::PathBatch;
use aquafarm::payoff::evaluate_farm_value;
use aquafarm::pinn::SamplingBox;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let policy = BiologicalControl(s.clone());
    let train = PathBatch::simulate(&p, 4096, 1024, 1);
    let valid = PathBatch::simulate(&p, 4096, 1024, 2);

    let bounds = SamplingBox::from_grid(&GridSpec::desk(&p), &p);
    let mut cfg = DeepOsConfig::desk(bounds);
    cfg.stride = 32;
    cfg.minibatch = 1024;
    cfg.steps_per_time = 200;

    let t0 = Instant::now();
    let trained = train_deepos(&train, &policy, &p, &s, &cfg).unwrap();
    println!(
        "trained {} decision nets in {:.1?}",
        trained.rule.nets().len(),
        t0.elapsed()
    );
    println!(
        "in sample:  learned {:.4} vs best fixed time {:.4} (step {})",
        trained.train_value, trained.best_fixed_value, trained.best_fixed_step
    );

    let rep = evaluate_farm_value(&valid, &policy, &trained.rule, &p, &s).unwrap();
    println!(
        "out of sample: J = {:.4} (stderr {:.5}), mean stopping time {:.4}",
        rep.mean, rep.stderr, rep.mean_stop_time
    );
}
