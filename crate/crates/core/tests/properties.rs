use std::f64::consts::PI;

use hjsolve::control::{car_step, rollout_car_with, CarParams, CarState, RolloutSettings};
use hjsolve::evaluate::{mse_linf, success_rate, SignCriterion};
use hjsolve::geometry::{sample_boundary, sample_interior, Domain, SamplerSpec};
use hjsolve::grid_oracle::{transport_matrix, GridSpec, GroundTruth};
use hjsolve::hamiltonian::Hamiltonian;
use hjsolve::loss::{loss_value, Batch, LossWeights};
use hjsolve::network::{MlpArchitecture, Network, PeriodicArchitecture};
use hjsolve::scheme::{check_consistency, d_minus, d_plus, uniqueness_condition, SchemeConfig};
use hjsolve::trainer::{train_schedule, BatchSizes, Samplers, Schedule, SgdConfig, StepRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn domains() -> Vec<Domain> {
    vec![
        Domain::cube(3, 2.0),
        Domain::ball(2, 3.0),
        Domain::annulus(2, 0.2, 5.0),
        Domain::annulus(2, 0.2, 5.0).with_torus(1),
    ]
}

fn kinds() -> Vec<Hamiltonian> {
    vec![
        Hamiltonian::EikonalSquared,
        Hamiltonian::EikonalNorm,
        Hamiltonian::Quadratic,
        Hamiltonian::ReedsShepp { sigma: 1.3, rho: 0.7 },
        Hamiltonian::PursuitEvasion {
            sigma_e: 1.0,
            rho_e: 1.0,
            sigma_p: 1.5,
            rho_p: 0.5,
        },
    ]
}

fn dim_for(h: &Hamiltonian) -> usize {
    h.required_dim().unwrap_or(3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn boundary_samples_solve_their_boundary_equation(seed in any::<u64>(), which in 0usize..4) {
        let domain = &domains()[which];
        for (x, tag) in sample_boundary(domain, &SamplerSpec::uniform_boundary(seed), 200).unwrap() {
            prop_assert!(domain.boundary_residual(&x, tag).abs() <= 1e-12);
        }
    }

    #[test]
    fn interior_samples_are_inside_and_reproducible(seed in any::<u64>(), which in 0usize..4) {
        let domain = &domains()[which];
        let spec = SamplerSpec::uniform_interior(seed);
        let a = sample_interior(domain, &spec, 100).unwrap();
        prop_assert!(a.iter().all(|x| domain.contains(x)));
        prop_assert_eq!(a, sample_interior(domain, &spec, 100).unwrap());
    }

    #[test]
    fn parameter_bytes_round_trip(seed in any::<u64>()) {
        let net = Network::init(PeriodicArchitecture::trailing_angles(2, 1, 2, vec![5, 4]), seed).unwrap();
        let back = Network::from_bytes(&net.to_bytes().unwrap()).unwrap();
        prop_assert!(net.params().iter().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(net.architecture(), back.architecture());
    }

    #[test]
    fn relu_network_is_linear_between_kinks(seed in any::<u64>(), t in -1.0f64..1.0) {
        let net = Network::init(MlpArchitecture::new(2, vec![6, 6]), seed).unwrap();
        let base = [0.3 * t, -0.7 * t];
        let dir = [0.6, 0.8];
        let h = 1e-7;
        let at = |s: f64| net.eval(&[base[0] + s * dir[0], base[1] + s * dir[1]]);
        // Only judge probes well inside one linear piece.
        prop_assume!(net.min_abs_preactivation(&base) > 1e-4);
        let (a, b, c) = (at(-h), at(0.0), at(h));
        prop_assert!((a + c - 2.0 * b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn gradient_of_h_is_bounded_by_its_constant(seed in any::<u64>(), which in 0usize..5, lip in 0.1f64..5.0) {
        let h = &kinds()[which];
        let d = dim_for(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let scale = lip * rng.random::<f64>();
        let p: Vec<f64> = raw.iter().map(|v| v / norm * scale).collect();
        let g = h.grad_p(&x, &p).unwrap();
        let size = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(size <= h.ch_bound(lip).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_of_h_matches_differences(seed in any::<u64>(), which in 0usize..5) {
        let h = &kinds()[which];
        let d = dim_for(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        prop_assume!(h.kink_distance(&x, &p) > 1e-3);
        let g = h.grad_p(&x, &p).unwrap();
        let step = 1e-6;
        for i in 0..d {
            let mut hi = p.clone();
            hi[i] += step;
            let mut lo = p.clone();
            lo[i] -= step;
            let fd = (h.eval(&x, &hi).unwrap() - h.eval(&x, &lo).unwrap()) / (2.0 * step);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn car_hamiltonian_is_positively_homogeneous(seed in any::<u64>(), lambda in 0.01f64..10.0) {
        let h = Hamiltonian::ReedsShepp { sigma: 1.3, rho: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0 * PI)];
        let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let scaled: Vec<f64> = p.iter().map(|v| lambda * v).collect();
        let lhs = h.eval(&x, &scaled).unwrap() + 1.0;
        let rhs = lambda * (h.eval(&x, &p).unwrap() + 1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn consistency_for_any_alpha(alpha in 0.0f64..10.0, delta in 1e-3f64..1.0, which in 0usize..5, seed in any::<u64>()) {
        let h = &kinds()[which];
        prop_assert!(check_consistency(h, &SchemeConfig::new(alpha, delta), dim_for(h), 50, seed).unwrap());
    }

    #[test]
    fn one_sided_differences_are_exact_on_affine_fields(delta in 1e-3f64..2.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let u = move |x: &[f64]| a * x[0] + b * x[1] + 0.25;
        let x = [0.3, -1.1];
        for g in [d_plus(&u, &x, delta), d_minus(&u, &x, delta)] {
            prop_assert!((g[0] - a).abs() <= 1e-9 * (1.0 + a.abs()) / delta.min(1.0));
            prop_assert!((g[1] - b).abs() <= 1e-9 * (1.0 + b.abs()) / delta.min(1.0));
        }
    }

    #[test]
    fn uniqueness_condition_is_monotone(alpha in 0.1f64..5.0, delta in 0.01f64..1.0, tau in 0.0f64..2.0, bump in 0.0f64..1.0, lip in 0.1f64..3.0) {
        let h = Hamiltonian::EikonalSquared;
        let base = uniqueness_condition(&h, &SchemeConfig::new(alpha, delta).with_tau(tau), lip, 2).unwrap().1;
        let bigger_delta = (delta + bump).min(1.0);
        for cfg in [
            SchemeConfig::new(alpha + bump, delta).with_tau(tau),
            SchemeConfig::new(alpha, delta).with_tau(tau + bump),
            SchemeConfig::new(alpha, bigger_delta).with_tau(tau),
        ] {
            prop_assert!(uniqueness_condition(&h, &cfg, lip, 2).unwrap().1 >= base - 1e-15);
        }
    }

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>()) {
        let net = Network::init(MlpArchitecture::new(2, vec![5]), seed).unwrap();
        let domain = Domain::cube(2, 1.0);
        let batch = Batch {
            interior: sample_interior(&domain, &SamplerSpec::uniform_interior(seed), 10).unwrap(),
            boundary: vec![(vec![1.0, 0.0], 0.0)],
            supervised: vec![(vec![0.0, 0.0], 1.0)],
            initial: Vec::new(),
        };
        let parts = loss_value(&net, &Hamiltonian::EikonalSquared, &SchemeConfig::new(1.0, 0.1), &LossWeights::new(1.0, 1.0, 0.0), &batch).unwrap();
        prop_assert!(parts.total >= 0.0 && parts.residual >= 0.0 && parts.boundary >= 0.0 && parts.supervised >= 0.0);
    }

    #[test]
    fn transport_operator_norm_bound(seed in any::<u64>(), dim in 1usize..3, n in 3usize..7) {
        let grid = GridSpec::new(dim, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = grid.interior_len();
        let v: Vec<Vec<f64>> = (0..dim).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let vmax = v.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        let a = transport_matrix(&grid, &v).unwrap();
        let top = a.singular_values().max();
        prop_assert!(top <= 2.0 * dim as f64 * vmax * (1.0 + 1e-12));
    }

    #[test]
    fn car_steps_respect_speed_and_wrap(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0, dt in 1e-3f64..0.5) {
        let params = CarParams::new(1.7, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = CarState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-10.0..10.0));
        let next = car_step(&params, &s, a, b, dt);
        prop_assert!((0.0..2.0 * PI).contains(&next.omega));
        let moved = (next.x - s.x).hypot(next.y - s.y);
        prop_assert!(moved <= params.sigma * dt * (1.0 + 1e-12));
    }
}

#[test]
fn cube_sample_means_sit_at_the_center() {
    let domain = Domain::cube(3, 2.0);
    let n = 100_000;
    let pts = sample_interior(&domain, &SamplerSpec::uniform_interior(3), n).unwrap();
    // Each coordinate is uniform on (−2, 2) with variance 4/3.
    let sd_of_mean = (4.0f64 / 3.0 / n as f64).sqrt();
    for i in 0..3 {
        let mean = pts.iter().map(|x| x[i]).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 * sd_of_mean, "coordinate {i}: mean {mean}");
    }
}

#[test]
fn radially_uniform_radii_are_uniform() {
    let radius = 3.0;
    let mut r: Vec<f64> = sample_interior(&Domain::ball(4, radius), &SamplerSpec::radially_uniform(9), 100_000)
        .unwrap()
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() / radius)
        .collect();
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    let ks = r
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0f64, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn training_is_reproducible_for_both_step_rules() {
    let domain = Domain::cube(2, 1.0);
    let problem = hjsolve::loss::Problem::stationary(domain.clone(), Hamiltonian::EikonalSquared, Default::default());
    for rule in [StepRule::adam(1e-3), StepRule::Constant { eta: 1e-3 }] {
        let run = || {
            let mut net = Network::init(MlpArchitecture::new(2, vec![6]), 4).unwrap();
            let schedule = Schedule::uniform(&[(1.0, 0.2), (0.5, 0.1)], SgdConfig::new(30, BatchSizes::new(16, 8), rule)).unwrap();
            let report = train_schedule(&mut net, &problem, &schedule, &LossWeights::default(), &mut Samplers::uniform(&domain, 8).unwrap()).unwrap();
            (net.params().to_vec(), report)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        for (x, y) in ra.stages.iter().zip(&rb.stages) {
            assert!(x.trace.iter().zip(&y.trace).all(|(p, q)| p.same_losses(q)));
        }
    }
}

#[test]
fn metrics_are_deterministic_and_rates_bounded() {
    let domain = Domain::ball(2, 3.0);
    let truth = GroundTruth::distance_to_boundary(&domain).unwrap();
    let net = Network::init(MlpArchitecture::new(2, vec![5]), 1).unwrap();
    assert_eq!(mse_linf(&net, &truth, &domain, 5000, true, 4).unwrap(), mse_linf(&net, &truth, &domain, 5000, true, 4).unwrap());
    let nets: Vec<Network> = (0..4).map(|s| Network::init(MlpArchitecture::new(2, vec![5]), s).unwrap()).collect();
    let crit = SignCriterion::default();
    let base = success_rate(&nets, &truth, &domain, &crit).unwrap();
    assert!((0.0..=1.0).contains(&base.rate));
    let mut more: Vec<GroundTruth> = vec![truth.clone(); 3];
    more.push(GroundTruth::distance_to_boundary(&Domain::cube(2, 1.0)).unwrap());
    let all_right = success_rate(&more[..3], &truth, &domain, &crit).unwrap();
    assert_eq!(all_right.rate, 1.0);
}

#[test]
fn rollouts_are_deterministic() {
    let params = CarParams::new(1.0, 1.0).unwrap();
    let field = |x: &[f64]| x[0].hypot(x[1]) + 0.1 * x[2].sin();
    let settings = RolloutSettings::new(5.0, 0.05);
    let run = || {
        rollout_car_with(&params, CarState::new(2.0, 1.0, 0.3), &settings, 0.2, |s| {
            hjsolve::control::car_feedback(&field, settings.fd_delta, s)
        })
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.steps.len(), b.steps.len());
    assert!(a.steps.iter().zip(&b.steps).all(|(p, q)| p.state == q.state));
}
