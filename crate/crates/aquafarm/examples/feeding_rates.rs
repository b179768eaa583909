//! Prints the four biological feeding schedules over the horizon as CSV.
//!
//! ```sh
//! cargo run --release --example feeding_rates > rates.csv
//! ```

use aquafarm::model::{FeedingStrategy, ModelParams};

fn main() {
    let p = ModelParams::baseline();
    let schedules = [
        ("linear", FeedingStrategy::linear_baseline()),
        ("exponential", FeedingStrategy::exponential_normalized(0.1, p.horizon)),
        ("logistic", FeedingStrategy::logistic_baseline(0.1, p.horizon)),
        ("sinusoidal", FeedingStrategy::sinusoidal_normalized(0.1, 0.1, p.horizon / 12.0, p.horizon)),
    ];
    println!("t,{}", schedules.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","));
    let n = 300;
    for k in 0..=n {
        let t = p.horizon * k as f64 / n as f64;
        let rates: Vec<String> = schedules.iter().map(|(_, s)| format!("{:.6}", s.rate(t))).collect();
        println!("{t:.4},{}", rates.join(","));
    }
}
