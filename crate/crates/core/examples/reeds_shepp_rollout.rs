//! Drives a Reeds-Shepp car to the origin with the bang-bang feedback of a
//! pretrained value function shipped under `assets/`.
//!
//! `cargo run --release --example reeds_shepp_rollout`

use hjsolve::cli::{read_numeric_csv, ExperimentConfig};
use hjsolve::control::{rollout_car, CarOutcome, CarParams, CarState, RolloutSettings};
use hjsolve::network::Network;
use std::path::Path;

fn main() -> hjsolve::Result<()> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let cfg = ExperimentConfig::load(&assets.join("reeds_shepp.json"))?;
    let net = Network::load(assets.join("reeds_shepp.hjnn"))?;
    let fd_delta = cfg.schedule.last().map_or(0.3, |s| s.delta);
    let car = CarParams::new(1.0, 1.0)?;
    for row in read_numeric_csv(&assets.join("reeds_shepp_poses.csv"))? {
        let start = CarState::new(row[0], row[1], row[2]);
        let settings = RolloutSettings::new(3.0 * start.distance() / car.sigma, fd_delta);
        let run = rollout_car(&net, &car, start, &settings, 0.2)?;
        let end = run.steps.last().expect("nonempty trajectory").state;
        match run.outcome {
            CarOutcome::ReachedTarget(t) => println!(
                "from ({:.2}, {:.2}, {:.2}): reached the target at t = {t:.2} (value predicted {:.2})",
                row[0], row[1], row[2], net.eval(&start.as_input())
            ),
            CarOutcome::Timeout => println!(
                "from ({:.2}, {:.2}, {:.2}): timed out at distance {:.2}",
                row[0], row[1], row[2], end.distance()
            ),
        }
    }
    Ok(())
}
