use aquafarm::model::*;
use aquafarm::payoff::*;

fn main() {
    let p = ModelParams::baseline();
    let s = FeedingStrategy::linear_baseline();
    let dt = 3.0 / 2048.0;
    let tau1 = biomass_peak_time(&s, &p, dt);
    println!("tau1 = {tau1}");
    let t = p.horizon;
    for (name, choice) in [("f", BenchmarkControl::Biological), ("0", BenchmarkControl::Zero)] {
        for tau in [tau1, t] {
            let v = deterministic_benchmark_value(&s, &p, choice, tau);
            println!("u={name} tau={tau:.4} -> J = {v:.6}");
        }
    }
}
