//! Solves the joint control-and-stopping problem on the coarse grid with
//! the explicit upwind scheme, then evaluates the solved policy with the
//! value-threshold harvesting rule on a shared path batch.
//!
//! ```sh
//! cargo run --release --example fd_solve
//! ```

use std::time::Instant;

use aquafarm::fd::{solve, stability_check, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::{FeedingStrategy, ModelParams};
use aquafarm::paths::PathBatch;
use aquafarm::payoff::evaluate_farm_value;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let grid = GridSpec::desk(&p);

    let report = stability_check(&grid, &p, &s);
    println!("{report}");
    assert!(report.is_stable());

    let t0 = Instant::now();
    let sol = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
    println!(
        "solved {} nodes x {} steps in {:.1?}; {} slices retained",
        grid.n_nodes(),
        grid.n_time_steps,
        t0.elapsed(),
        sol.retained_steps.len()
    );

    let batch = PathBatch::simulate(&p, 4096, 2048, 7);
    let rep = evaluate_farm_value(&batch, &sol.policy(), &sol.threshold_stopping(1e-3), &p, &s).unwrap();
    println!(
        "joint strategy on {} paths: J = {:.4} (stderr {:.5}), mean harvest time {:.4}",
        batch.n_paths, rep.mean, rep.stderr, rep.mean_stop_time
    );
}
