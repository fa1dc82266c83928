//! Pursuit-evasion game between two Reeds-Shepp cars in relative
//! coordinates. A short training run produces a rough game value; both
//! players then follow its feedback until capture, escape or timeout.
//!
//! `cargo run --release --example pursuit_evasion [iterations_per_stage]`

use hjsolve::control::{rollout_game, CarParams, GameArena, GameOutcome, GameState, RolloutSettings};
use hjsolve::geometry::{Domain, SamplerSpec};
use hjsolve::hamiltonian::Hamiltonian;
use hjsolve::loss::{BoundaryValues, LossWeights, Problem};
use hjsolve::network::{Network, PeriodicArchitecture};
use hjsolve::trainer::{train_schedule, BatchSizes, Samplers, Schedule, SgdConfig, StepRule};

fn main() -> hjsolve::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(300);
    let evader = CarParams::new(1.0, 1.0)?;
    let pursuer = CarParams::new(1.5, 0.5)?;
    let arena = GameArena { capture_radius: 0.2, escape_radius: 4.0 };
    let hamiltonian = Hamiltonian::PursuitEvasion {
        sigma_e: evader.sigma,
        rho_e: evader.rho,
        sigma_p: pursuer.sigma,
        rho_p: pursuer.rho,
    };
    let domain = Domain::annulus(2, arena.capture_radius, arena.escape_radius).with_torus(2);
    // Capture is worth 0; reaching the escape circle is worth its radius.
    let problem = Problem::stationary(domain.clone(), hamiltonian, BoundaryValues::shells(0.0, arena.escape_radius));

    let seed = 0;
    let mut net = Network::init(PeriodicArchitecture::trailing_angles(2, 2, 4, vec![40, 40]), seed)?;
    let sgd = SgdConfig::new(iterations, BatchSizes::new(200, 100), StepRule::adam(1e-3));
    let schedule = Schedule::uniform(&[(3.5, 0.75), (3.5, 0.5)], sgd)?;
    let mut source = Samplers::new(&domain, &SamplerSpec::uniform_interior(seed), Some(&SamplerSpec::uniform_boundary(seed)), seed)?;
    let report = train_schedule(&mut net, &problem, &schedule, &LossWeights::default(), &mut source)?;
    println!("final loss {:.3e}", report.final_loss().unwrap_or(f64::NAN));

    let settings = RolloutSettings::new(20.0, 0.5).with_dt(0.01);
    for (x, y, we, wp) in [(1.0, 0.0, 0.0, 3.14), (0.0, 2.0, 1.57, 0.0), (-1.5, -1.0, 0.5, 2.0)] {
        let run = rollout_game(&net, &evader, &pursuer, GameState::new(x, y, we, wp), &settings, &arena)?;
        let closest = run.steps.iter().map(|s| s.distance).fold(f64::INFINITY, f64::min);
        let verdict = match run.outcome {
            GameOutcome::Captured(t) => format!("captured at t = {t:.2}"),
            GameOutcome::Escaped(t) => format!("escaped at t = {t:.2}"),
            GameOutcome::Timeout => "timeout".to_string(),
        };
        println!("start ({x}, {y}, {we}, {wp}): {verdict}, closest approach {closest:.3}");
    }
    Ok(())
}
