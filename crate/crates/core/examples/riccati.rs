//! Time-dependent problem `u_t + |∇u|²/2 = 0` with a quadratic initial
//! condition, compared against the integrated matrix Riccati solution.
//!
//! `cargo run --release --example riccati [iterations_per_stage]`

use hjsolve::evaluate::mse_linf_spacetime;
use hjsolve::geometry::{Domain, SamplerSpec};
use hjsolve::grid_oracle::GroundTruth;
use hjsolve::hamiltonian::Hamiltonian;
use hjsolve::loss::{FieldFn, LossWeights, Problem};
use hjsolve::network::{MlpArchitecture, Network};
use hjsolve::trainer::{train_schedule_with, BatchSizes, Samplers, Schedule, SgdConfig, Stage, StepRule};

fn main() -> hjsolve::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let horizon = 0.5;
    let domain = Domain::cube(2, 3.0);
    let truth = GroundTruth::riccati(2, horizon)?;
    let initial = FieldFn::new(|x: &[f64]| 0.5 * (4.0 / 25.0 * x[0] * x[0] + x[1] * x[1] - 1.0));
    let problem = Problem::evolution(domain.clone(), Hamiltonian::Quadratic, initial, horizon);

    let sgd = SgdConfig::new(iterations, BatchSizes::new(100, 0).with_initial(100), StepRule::adam(1e-3));
    let stages = [(2.5, 0.5, 0.05), (2.0, 0.3, 0.03), (1.5, 0.2, 0.02), (1.0, 0.1, 0.01)]
        .iter()
        .map(|&(alpha, delta, dt)| Stage::new(alpha, delta, sgd).with_delta_t(dt))
        .collect();
    let schedule = Schedule::new(stages)?;

    let seed = 0;
    let mut net = Network::init(MlpArchitecture::new(3, vec![50, 50]), seed)?;
    let mut source = Samplers::new(&domain, &SamplerSpec::uniform_interior(seed), None, seed)?;
    // The initial-condition term carries the data; the time residual is lightly weighted.
    let weights = LossWeights::new(0.0, 0.0, 1e-3);
    train_schedule_with(&mut net, &problem, &schedule, &weights, &mut source, |stage, net| {
        let m = mse_linf_spacetime(net, &truth, &domain, horizon, 20_000, 99).expect("metrics");
        println!("after stage {}: mse {:.2e}  linf {:.3}", stage + 1, m.mse, m.linf);
    })?;
    for t in [0.0, 0.25, 0.5] {
        let x = [1.0, 1.0, t];
        println!("u(1, 1, {t}) = {:.4}   exact {:.4}", net.eval(&x), truth.value(&x));
    }
    Ok(())
}
