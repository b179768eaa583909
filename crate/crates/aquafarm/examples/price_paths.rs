//! Simulates a small batch of feed/biomass price paths, verifies the
//! discounted-martingale property empirically, and writes the batch CSV.
//!
//! ```sh
//! cargo run --release --example price_paths
//! ```

use std::fs::File;
use std::io::BufWriter;

use aquafarm::model::ModelParams;
use aquafarm::paths::PathBatch;

fn main() -> std::io::Result<()> {
    let p = ModelParams::baseline();
    let batch = PathBatch::simulate(&p, 2048, 256, 42);

    let step = batch.n_steps;
    let disc = (-p.r * batch.time(step)).exp();
    for (name, start, feed) in [("feed", p.p_f0, true), ("biomass", p.p_b0, false)] {
        let vals: Vec<f64> = (0..batch.n_paths)
            .map(|i| disc * if feed { batch.price_f(i, step) } else { batch.price_b(i, step) })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        let stderr = (var / vals.len() as f64).sqrt();
        println!("{name}: discounted mean at T = {mean:.6} (start {start:.6}, stderr {stderr:.2e})");
    }

    let out = "price_paths.csv";
    batch.write_csv(BufWriter::new(File::create(out)?))?;
    println!("wrote {out}");
    Ok(())
}
