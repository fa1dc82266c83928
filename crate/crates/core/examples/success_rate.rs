//! Sign-agreement success rates over seeds for several finite-difference
//! steps, with and without a handful of supervised interior values.
//!
//! `cargo run --release --example success_rate [seeds]`

use hjsolve::cli::{run_sweep, ExperimentConfig};
use std::path::Path;

fn main() -> hjsolve::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for file in ["success_ball.json", "success_ball_supervised.json"] {
        let cfg = ExperimentConfig::load(&configs.join(file))?;
        println!("{}", cfg.name);
        for row in run_sweep(&cfg, &seeds, 1)? {
            println!("  alpha {:<4} delta {:<5} success {:.2}", row.alpha, row.delta, row.rate.rate);
        }
    }
    Ok(())
}
