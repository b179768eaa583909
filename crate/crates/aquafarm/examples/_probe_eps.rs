use aquafarm::fd::{solve, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::*;
use std::io::Write;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    let grid = GridSpec::desk(&p);
    let vi = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
    for eps in [0.01, 0.0075, 0.005, 0.00375, 0.0025, 0.00125, 0.0005, 0.0] {
        let rep = evaluate_farm_value(&batch, &vi.policy(), &vi.threshold_stopping(eps), &p, &s).unwrap();
        println!("eps={eps:.5}: E[tau]={:.4} J={:.4}", rep.mean_stop_time, rep.mean);
        std::io::stdout().flush().unwrap();
    }
}
