use aquafarm::fd::{solve, GridSpec, SolveMode, SolveOptions};
use aquafarm::model::*;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::*;
use std::io::Write;
use std::time::Instant;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let grid = GridSpec::desk(&p);
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    let tau1_step = biomass_peak_step(&s, &p, batch.dt);
    println!("tau1 = {}", tau1_step as f64 * batch.dt);

    let t0 = Instant::now();
    let vi = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::VariationalInequality)).unwrap();
    println!("VI solve {:.0?}", t0.elapsed()); std::io::stdout().flush().unwrap();

    // scenario 6: joint policy + threshold stop
    let t0 = Instant::now();
    let rep = evaluate_farm_value(&batch, &vi.policy(), &vi.threshold_stopping(0.01), &p, &s).unwrap();
    println!("scenario 6: E[tau]={:.4} J={:.4} (stderr {:.5}) [paper 1.9652 / 0.1841] in {:.0?}", rep.mean_stop_time, rep.mean, rep.stderr, t0.elapsed()); std::io::stdout().flush().unwrap();

    // scenario 1: control-only policy to horizon
    let co = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::ControlOnly)).unwrap();
    let rep1 = evaluate_farm_value(&batch, &co.policy(), &StopAtHorizon, &p, &s).unwrap();
    println!("scenario 1: E[tau]={:.4} J={:.4} [paper 3.0 / 0.1259]", rep1.mean_stop_time, rep1.mean);

    // scenario 2: same policy stopped at tau1
    let rep2 = evaluate_farm_value(&batch, &co.policy(), &StopAtStep(tau1_step), &p, &s).unwrap();
    println!("scenario 2: E[tau]={:.4} J={:.4} [paper 2.1764 / 0.1760]", rep2.mean_stop_time, rep2.mean);

    // scenario 4: truncated-horizon policy stopped at tau1
    let trunc = solve(&grid, &p, &s, &SolveOptions::new(SolveMode::ControlOnly).with_horizon(tau1_step as f64 * batch.dt)).unwrap();
    let rep4 = evaluate_farm_value(&batch, &trunc.policy(), &StopAtStep(tau1_step), &p, &s).unwrap();
    println!("scenario 4: E[tau]={:.4} J={:.4} [paper 2.1764 / 0.1775]", rep4.mean_stop_time, rep4.mean);

    // benchmarks
    let repf = evaluate_farm_value(&batch, &BiologicalControl(s.clone()), &StopAtStep(tau1_step), &p, &s).unwrap();
    println!("bench u=f tau1: J={:.4} (oracle 0.1741, paper 0.1732)", repf.mean);
}
