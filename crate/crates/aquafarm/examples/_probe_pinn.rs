use aquafarm::fd::GridSpec;
use aquafarm::model::*;
use aquafarm::paths::PathBatch;
use aquafarm::payoff::*;
use aquafarm::pinn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::Instant;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let grid = GridSpec::desk(&p);
    let bounds = SamplingBox::from_grid(&grid, &p);
    let mut cfg = PinnConfig::desk(bounds);
    cfg.seed = 12445;
    let t0 = Instant::now();
    let sol = train_value(&cfg, ControlApproach::Feedback, &p, &s).unwrap();
    println!("desk train u1: {:.0?}", t0.elapsed());
    let h = &sol.loss_history;
    for r in h.iter().step_by(250) {
        println!("  e{:4}: pde {:.3e} fb {:.3e} term {:.3e}", r.epoch, r.pde, r.boundary, r.terminal);
    }
    let last = h.last().unwrap();
    println!("  final: pde {:.3e} fb {:.3e} term {:.3e}", last.pde, last.boundary, last.terminal);
    std::io::stdout().flush().unwrap();

    // terminal RMSE on fresh 1e4 sample
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sq = 0.0;
    let mut viol: f64 = 0.0;
    for _ in 0..10_000 {
        let mut x = bounds.sample(&mut rng);
        x[0] = p.horizon;
        let d = sol.value_net.value(&x) - exercise_value(&x);
        sq += d * d;
        let mut y = bounds.sample(&mut rng);
        y[0] = rng.gen_range(0.0..p.horizon);
        let vd = sol.value_net.value(&y) - exercise_value(&y);
        viol = viol.max(-vd);
    }
    println!("terminal RMSE = {:.2e} (<= 9.57e-4?)  max obstacle violation = {:.3e} (<= 0.02?)", (sq / 1e4).sqrt(), viol);
    std::io::stdout().flush().unwrap();

    // value monotone in pB at x0
    let x0 = [0.0, p.w0, p.h0, p.p_f0, p.p_b0];
    let x0d = [0.0, p.w0, p.h0, p.p_f0, 2.0 * p.p_b0];
    println!("V(x0) = {:.4}, V(x0, 2pB) = {:.4}", sol.value_net.value(&x0), sol.value_net.value(&x0d));

    // evaluate J(u1, threshold eps=0.01)
    let batch = PathBatch::simulate(&p, 8192, 2048, 12345);
    let policy = sol.policy(&p, &s);
    let t0 = Instant::now();
    let rep = evaluate_farm_value(&batch, &policy, &sol.threshold_stopping(&p), &p, &s).unwrap();
    println!("J(u1, thr 0.01) = {:.4}, E[tau] = {:.4} [{:.0?}] (paper full-scale: 0.1835/1.8729; desk fd6 ~0.1826)", rep.mean, rep.mean_stop_time, t0.elapsed());
}
