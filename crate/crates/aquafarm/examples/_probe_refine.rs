use aquafarm::fd::{solve, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use std::time::Instant;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    for n_w in [32usize, 64, 128, 256, 512] {
        let mut grid = GridSpec::desk(&p);
        grid.w.n = n_w;
        // time refinement to keep stability margin comfortable
        grid.n_time_steps = 512 * (n_w / 32).max(1);
        let t0 = Instant::now();
        let sol = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
        // also read V at a mid-box state
        let mid = FarmState { w: 0.5, h: 1.0, p_f: 0.075, p_b: 0.1 };
        println!("n_w={n_w:4} steps={:5}: V0={:.4}  V(w=0.5)={:.4}  [{:.0?}]", grid.n_time_steps, sol.v0, sol.value_at(0.0, &mid), t0.elapsed());
    }
}
