//! Replays one Monte-Carlo path under the biological feeding strategy
//! with harvesting at the biomass peak and writes the figure CSV
//! (time, state, control, running value, stopped flag).
//!
//! ```sh
//! cargo run --release --example trajectory > trajectory.csv
//! ```

use aquafarm::model::{biomass_peak_step, BiologicalControl, FeedingStrategy, ModelParams};
use aquafarm::paths::PathBatch;
use aquafarm::payoff::{replay_path, StopAtStep};

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let batch = PathBatch::simulate(&p, 8, 512, 99);
    let tau1 = biomass_peak_step(&s, &p, batch.dt);
    let policy = BiologicalControl(s.clone());
    let rows = replay_path(&batch, 0, &policy, &StopAtStep(tau1), &p, &s).unwrap();

    println!("t,w,h,pF,pB,u,running_value,stopped");
    for r in rows {
        let u = if r.control.is_finite() { r.control.to_string() } else { String::new() };
        println!(
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.w,
            r.h,
            r.p_f,
            r.p_b,
            u,
            r.running_value,
            u8::from(r.stopped)
        );
    }
}
