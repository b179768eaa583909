use aquafarm::fd::{solve, stability_check, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use std::time::Instant;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let grid = GridSpec::desk(&p);
    println!("stability: {}", stability_check(&grid, &p, &s));
    let t0 = Instant::now();
    let sol = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
    println!("desk VI solve: {:.1?}s  V(0,x0) = {:.6}  (paper joint value 0.1841)", t0.elapsed(), sol.v0);
    let t0 = Instant::now();
    let co = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::ControlOnly)).unwrap();
    println!("desk control-only solve: {:.1?}  V(0,x0) = {:.6} (paper scenario1 J=0.1259)", t0.elapsed(), co.v0);
}
