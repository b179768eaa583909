use aquafarm::fd::{solve, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::*;
use std::io::Write;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    for (n_t, stride) in [(512usize, 16usize), (512, 4), (512, 1), (1024, 4), (2048, 16), (2048, 4)] {
        let mut grid = GridSpec::desk(&p);
        grid.n_time_steps = n_t;
        grid.policy_stride = stride;
        let vi = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
        for eps in [0.01, 0.005] {
            let rep = evaluate_farm_value(&batch, &vi.policy(), &vi.threshold_stopping(eps), &p, &s).unwrap();
            println!("n_t={n_t:5} stride={stride:2} eps={eps:.3}: E[tau]={:.4} J={:.4} [paper 1.9652/0.1841]", rep.mean_stop_time, rep.mean);
            std::io::stdout().flush().unwrap();
        }
    }
}
