//! Fixed-time benchmark strategies against their closed-form values:
//! {starve, feed biologically} × {hold to the horizon, harvest at the
//! biomass peak}, evaluated pathwise and compared to the analytic
//! (martingale-collapsed) expectation.
//!
//! ```sh
//! cargo run --release --example benchmarks
//! ```

use aquafarm::model::{biomass_peak_step, BiologicalControl, FeedingStrategy, ModelParams, ZeroControl};
use aquafarm::model::ControlPolicy;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::{deterministic_benchmark_value, evaluate_farm_value, BenchmarkControl, StopAtStep};

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    let tau1_step = biomass_peak_step(&s, &p, batch.dt);
    let tau1 = tau1_step as f64 * batch.dt;
    println!("biomass peak tau1 = {tau1:.4}");

    let bio = BiologicalControl(s.clone());
    let cases: [(&str, &dyn ControlPolicy, BenchmarkControl, usize); 4] = [
        ("u=f, tau=T ", &bio, BenchmarkControl::Biological, batch.n_steps),
        ("u=f, tau=t1", &bio, BenchmarkControl::Biological, tau1_step),
        ("u=0, tau=T ", &ZeroControl, BenchmarkControl::Zero, batch.n_steps),
        ("u=0, tau=t1", &ZeroControl, BenchmarkControl::Zero, tau1_step),
    ];
    println!("{:<12} {:>10} {:>10} {:>10}", "strategy", "MC mean", "stderr", "analytic");
    for (name, policy, choice, stop) in cases {
        let rep = evaluate_farm_value(&batch, policy, &StopAtStep(stop), &p, &s).unwrap();
        let oracle = deterministic_benchmark_value(&s, &p, choice, stop as f64 * batch.dt);
        println!("{name:<12} {:>10.4} {:>10.5} {:>10.4}", rep.mean, rep.stderr, oracle);
    }
}
