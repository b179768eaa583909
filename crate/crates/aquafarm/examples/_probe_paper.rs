use aquafarm::fd::{solve, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::*;
use std::io::Write;
use std::time::Instant;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let mut grid = GridSpec::paper(&p);
    grid.policy_stride = 32; // slice memory
    let t0 = Instant::now();
    let vi = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
    println!("paper VI solve {:.0?}  V0={:.4}", t0.elapsed(), vi.v0);
    std::io::stdout().flush().unwrap();
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    for eps in [0.01, 0.005, 0.0025, 0.00125] {
        let rep = evaluate_farm_value(&batch, &vi.policy(), &vi.threshold_stopping(eps), &p, &s).unwrap();
        println!("paper grid eps={eps:.5}: E[tau]={:.4} J={:.4} [paper 1.9652/0.1841]", rep.mean_stop_time, rep.mean);
        std::io::stdout().flush().unwrap();
    }
}
