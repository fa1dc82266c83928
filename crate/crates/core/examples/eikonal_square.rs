//! Distance to the boundary of the square (−3, 3)², learned with a one-layer
//! ReLU network through the annealed Lax-Friedrichs schedule.
//!
//! `cargo run --release --example eikonal_square [iterations_per_stage]`

use hjsolve::evaluate::mse_linf;
use hjsolve::geometry::Domain;
use hjsolve::grid_oracle::GroundTruth;
use hjsolve::hamiltonian::Hamiltonian;
use hjsolve::loss::{BoundaryValues, LossWeights, Problem};
use hjsolve::network::{MlpArchitecture, Network};
use hjsolve::trainer::{train_schedule_with, BatchSizes, Samplers, Schedule, SgdConfig, StepRule};

fn main() -> hjsolve::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let domain = Domain::cube(2, 3.0);
    let truth = GroundTruth::distance_to_boundary(&domain)?;
    let problem = Problem::stationary(domain.clone(), Hamiltonian::EikonalSquared, BoundaryValues::constant(0.0));
    let sgd = SgdConfig::new(iterations, BatchSizes::new(60, 20), StepRule::adam(1.5e-3));
    let schedule = Schedule::uniform(&[(2.5, 0.75), (2.0, 0.5), (1.5, 0.3), (1.0, 0.1), (0.5, 0.05)], sgd)?;

    for seed in 0..3 {
        let mut net = Network::init(MlpArchitecture::new(2, vec![20]), seed)?;
        let mut source = Samplers::uniform(&domain, seed)?;
        println!("seed {seed}");
        train_schedule_with(&mut net, &problem, &schedule, &LossWeights::default(), &mut source, |stage, net| {
            let m = mse_linf(net, &truth, &domain, 100_000, true, 12345).expect("metrics");
            println!("  after stage {}: mse {:.2e}  linf {:.3}", stage + 1, m.mse, m.linf);
        })?;
        println!("  value at the origin {:.4} (exact 3)", net.eval(&[0.0, 0.0]));
    }
    Ok(())
}
