//! One-sided difference stencils, the Lax-Friedrichs numerical
//! Hamiltonian and checks of its consistency, monotonicity and of the
//! uniqueness condition for critical points of the residual functional.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::unit_vector;
use crate::hamiltonian::Hamiltonian;

/// Anything that can be evaluated pointwise on all of `ℝ^d`.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> ScalarField for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Parameters of the Lax-Friedrichs discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Numerical diffusion coefficient.
    pub alpha: f64,
    /// Spatial stencil width.
    pub delta: f64,
    /// Weight of the zeroth-order term `τ·u(x)`.
    #[serde(default)]
    pub tau: f64,
    /// Time step, for time-dependent problems only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
}

impl SchemeConfig {
    pub fn new(alpha: f64, delta: f64) -> Self {
        Self {
            alpha,
            delta,
            tau: 0.0,
            delta_t: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_delta_t(mut self, delta_t: f64) -> Self {
        self.delta_t = Some(delta_t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidScheme(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidScheme(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidScheme(format!("tau must be >= 0, got {}", self.tau)));
        }
        if let Some(dt) = self.delta_t {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidScheme(format!("delta_t must be > 0, got {dt}")));
            }
        }
        Ok(())
    }

    /// A warning when the explicit time step exceeds `δ/(2dα)`, beyond
    /// which the explicit update is no longer monotone.
    pub fn stability_warning(&self, dim: usize) -> Option<String> {
        let dt = self.delta_t?;
        let cap = self.delta / (2.0 * dim as f64 * self.alpha);
        (dt > cap).then(|| {
            format!(
                "delta_t = {dt} exceeds the monotone explicit step delta/(2 d alpha) = {cap:.6}"
            )
        })
    }
}

/// Forward differences `(u(x + δe_i) − u(x))/δ` over the first `dims` coordinates.
pub fn d_plus_partial(u: &(impl ScalarField + ?Sized), x: &[f64], delta: f64, dims: usize) -> Vec<f64> {
    let centre = u.value(x);
    let mut buf = x.to_vec();
    (0..dims)
        .map(|i| {
            buf[i] = x[i] + delta;
            let v = u.value(&buf);
            buf[i] = x[i];
            (v - centre) / delta
        })
        .collect()
}

/// Backward differences `(u(x) − u(x − δe_i))/δ` over the first `dims` coordinates.
pub fn d_minus_partial(u: &(impl ScalarField + ?Sized), x: &[f64], delta: f64, dims: usize) -> Vec<f64> {
    let centre = u.value(x);
    let mut buf = x.to_vec();
    (0..dims)
        .map(|i| {
            buf[i] = x[i] - delta;
            let v = u.value(&buf);
            buf[i] = x[i];
            (centre - v) / delta
        })
        .collect()
}

/// Forward difference quotient in every coordinate.
pub fn d_plus(u: &(impl ScalarField + ?Sized), x: &[f64], delta: f64) -> Vec<f64> {
    d_plus_partial(u, x, delta, x.len())
}

/// Backward difference quotient in every coordinate.
pub fn d_minus(u: &(impl ScalarField + ?Sized), x: &[f64], delta: f64) -> Vec<f64> {
    d_minus_partial(u, x, delta, x.len())
}

/// `Ĥ_α(x, p⁺, p⁻) = H(x, (p⁺ + p⁻)/2) − α Σ_i (p⁺_i − p⁻_i)/2 + τ·u(x)`.
pub fn lax_friedrichs(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    x: &[f64],
    p_plus: &[f64],
    p_minus: &[f64],
    u_x: Option<f64>,
) -> Result<f64> {
    if p_plus.len() != x.len() || p_minus.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: if p_plus.len() != x.len() {
                p_plus.len()
            } else {
                p_minus.len()
            },
        });
    }
    let zeroth = if cfg.tau > 0.0 {
        cfg.tau * u_x.ok_or(Error::MissingFieldValue)?
    } else {
        0.0
    };
    let avg: Vec<f64> = p_plus.iter().zip(p_minus).map(|(a, b)| 0.5 * (a + b)).collect();
    let diffusion: f64 = p_plus.iter().zip(p_minus).map(|(a, b)| 0.5 * (a - b)).sum();
    Ok(h.eval(x, &avg)? - cfg.alpha * diffusion + zeroth)
}

/// `Ĥ_α(x, D⁺u(x), D⁻u(x)) (+ τ u(x))`.
pub fn residual(h: &Hamiltonian, cfg: &SchemeConfig, u: &(impl ScalarField + ?Sized), x: &[f64]) -> Result<f64> {
    let pp = d_plus(u, x, cfg.delta);
    let pm = d_minus(u, x, cfg.delta);
    lax_friedrichs(h, cfg, x, &pp, &pm, Some(u.value(x)))
}

/// `u(x, t + δ_t) − u(x, t) + δ_t Ĥ_α(x, D⁺u(·, t)(x), D⁻u(·, t)(x))` for a
/// field whose inputs are laid out as `(x, t)`.
pub fn residual_time(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    u: &(impl ScalarField + ?Sized),
    x: &[f64],
    t: f64,
) -> Result<f64> {
    let dt = cfg.delta_t.ok_or(Error::MissingTimeStep)?;
    let d = x.len();
    let mut xt = x.to_vec();
    xt.push(t);
    let pp = d_plus_partial(u, &xt, cfg.delta, d);
    let pm = d_minus_partial(u, &xt, cfg.delta, d);
    let now = u.value(&xt);
    xt[d] = t + dt;
    let next = u.value(&xt);
    let hat = lax_friedrichs(h, cfg, x, &pp, &pm, Some(now))?;
    Ok(next - now + dt * hat)
}

/// Draws a probe location: spatial coordinates uniform in `[−3, 3]`, angle
/// coordinates of the Hamiltonian uniform in `[0, 2π)`.
fn probe_point<R: Rng>(h: &Hamiltonian, dim: usize, rng: &mut R) -> Vec<f64> {
    let angles = h.angle_coordinates();
    (0..dim)
        .map(|i| {
            if angles.contains(&i) {
                TAU * rng.random::<f64>()
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect()
}

/// Uniform draw from the closed Euclidean ball of radius `r`.
fn ball_point<R: Rng>(dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    let v = unit_vector(dim, rng);
    let s = r * rng.random::<f64>().powf(1.0 / dim as f64);
    v.into_iter().map(|a| a * s).collect()
}

/// True iff `|Ĥ_α(x, p, p) − H(x, p)| ≤ 1e-12` on `n_probes` random
/// probes, with random nonzero field values for the `τ` term.
pub fn check_consistency(h: &Hamiltonian, cfg: &SchemeConfig, dim: usize, n_probes: usize, seed: u64) -> Result<bool> {
    let dim = h.required_dim().unwrap_or(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_probes {
        let x = probe_point(h, dim, &mut rng);
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let u_x = 0.5 + rng.random::<f64>();
        let hat = lax_friedrichs(h, cfg, &x, &p, &p, Some(u_x))?;
        if (hat - h.eval(&x, &p)?).abs() > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of the monotonicity probe suite.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub probes: usize,
    /// Probes skipped because they sit within `1e-8` of a kink of `H`.
    pub skipped: usize,
    pub violations: usize,
    /// First violating stencil `(x, p⁺, p⁻)`, if any.
    pub counterexample: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Finite-perturbation monotonicity test of the scheme as a function of the
/// stencil values `u(x)`, `u(x ± δe_i)`.
///
/// Slopes `p⁺`, `p⁻` are drawn uniformly from the Euclidean `L`-ball. Each
/// stencil value is perturbed by `1e-6·δ`; the scheme must not decrease
/// when the centre value rises and must not increase when a neighbour
/// rises. A tolerance absorbs the second-order terms of the perturbation.
pub fn monotonicity_probe(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    dim: usize,
    lipschitz: f64,
    n_probes: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if !(lipschitz > 0.0) {
        return Err(Error::NonPositiveL(lipschitz));
    }
    let dim = h.required_dim().unwrap_or(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = cfg.delta;
    let eps = 1e-6 * delta;
    let bound = h.ch_bound(lipschitz)?;
    // second-order remainder of a step of size eps, as a difference quotient
    let tol = 1e-5 * (1.0 + cfg.alpha + bound) / delta;
    let mut report = MonotonicityReport {
        probes: n_probes,
        skipped: 0,
        violations: 0,
        counterexample: None,
    };
    let mut plus = vec![0.0; dim];
    let mut minus = vec![0.0; dim];
    for _ in 0..n_probes {
        let x = probe_point(h, dim, &mut rng);
        let pp = ball_point(dim, lipschitz, &mut rng);
        let pm = ball_point(dim, lipschitz, &mut rng);
        let centre = rng.random_range(-1.0..1.0);
        let avg: Vec<f64> = pp.iter().zip(&pm).map(|(a, b)| 0.5 * (a + b)).collect();
        if h.kink_distance(&x, &avg) < 1e-8 + eps / delta {
            report.skipped += 1;
            continue;
        }
        // stencil values u(x ± δe_i)
        let up: Vec<f64> = pp.iter().map(|p| centre + delta * p).collect();
        let um: Vec<f64> = pm.iter().map(|p| centre - delta * p).collect();
        let scheme = |c: f64, up: &[f64], um: &[f64], plus: &mut [f64], minus: &mut [f64]| -> Result<f64> {
            for i in 0..dim {
                plus[i] = (up[i] - c) / delta;
                minus[i] = (c - um[i]) / delta;
            }
            lax_friedrichs(h, cfg, &x, plus, minus, Some(c))
        };
        let base = scheme(centre, &up, &um, &mut plus, &mut minus)?;
        let mut bad = (scheme(centre + eps, &up, &um, &mut plus, &mut minus)? - base) / eps < -tol;
        let mut shifted = up.clone();
        for i in 0..dim {
            if bad {
                break;
            }
            shifted[i] += eps;
            bad |= (scheme(centre, &shifted, &um, &mut plus, &mut minus)? - base) / eps > tol;
            shifted[i] = up[i];
        }
        let mut shifted = um.clone();
        for i in 0..dim {
            if bad {
                break;
            }
            shifted[i] += eps;
            bad |= (scheme(centre, &up, &shifted, &mut plus, &mut minus)? - base) / eps > tol;
            shifted[i] = um[i];
        }
        if bad {
            report.violations += 1;
            if report.counterexample.is_none() {
                report.counterexample = Some((x, pp, pm));
            }
        }
    }
    Ok(report)
}

/// True iff no probe of [`monotonicity_probe`] violates monotonicity.
pub fn check_monotonicity(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    dim: usize,
    lipschitz: f64,
    n_probes: usize,
    seed: u64,
) -> Result<bool> {
    Ok(monotonicity_probe(h, cfg, dim, lipschitz, n_probes, seed)?.passed())
}

/// Margin `2α sin²(πδ/2) + τ/d − C_H(L)` of the condition under which every
/// critical point with Lipschitz constant `L` solves the difference
/// equation; satisfied iff the margin is positive.
pub fn uniqueness_condition(h: &Hamiltonian, cfg: &SchemeConfig, lipschitz: f64, dim: usize) -> Result<(bool, f64)> {
    let s = (PI * cfg.delta / 2.0).sin();
    let margin = 2.0 * cfg.alpha * s * s + cfg.tau / dim as f64 - h.ch_bound(lipschitz)?;
    Ok((margin > 0.0, margin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_of_square() {
        let u = |x: &[f64]| x[0] * x[0];
        assert_eq!(d_plus(&u, &[1.0], 0.5), vec![2.5]);
        assert_eq!(d_minus(&u, &[1.0], 0.5), vec![1.5]);
    }

    #[test]
    fn differences_exact_on_linear() {
        let u = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1] + 0.5;
        for delta in [0.5, 0.25, 0.125] {
            assert_eq!(d_plus(&u, &[0.25, 0.5], delta), vec![2.0, -3.0]);
            assert_eq!(d_minus(&u, &[0.25, 0.5], delta), vec![2.0, -3.0]);
        }
        let c = |_: &[f64]| 4.0;
        assert_eq!(d_plus(&c, &[1.0, 2.0], 0.3), vec![0.0, 0.0]);
    }

    #[test]
    fn lax_friedrichs_hand_value() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1.0, 0.1);
        let v = lax_friedrichs(&h, &cfg, &[0.0], &[1.0], &[-1.0], None).unwrap();
        assert_eq!(v, -2.0);
    }

    #[test]
    fn vanishes_on_distance_function_away_from_kink() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1.0, 0.1);
        let u = |x: &[f64]| x[0].min(1.0 - x[0]);
        assert!(residual(&h, &cfg, &u, &[0.25]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn missing_field_value_with_tau() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1.0, 0.1).with_tau(0.5);
        assert!(matches!(
            lax_friedrichs(&h, &cfg, &[0.0], &[1.0], &[1.0], None),
            Err(Error::MissingFieldValue)
        ));
    }

    #[test]
    fn time_residual_of_linear_field() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1.0, 0.1).with_delta_t(0.05);
        let u = |z: &[f64]| z[0] + z[1];
        let r = residual_time(&h, &cfg, &u, &[0.3], 0.2).unwrap();
        assert!((r - 0.05).abs() < 1e-14);
        let no_dt = SchemeConfig::new(1.0, 0.1);
        assert!(matches!(
            residual_time(&h, &no_dt, &u, &[0.3], 0.2),
            Err(Error::MissingTimeStep)
        ));
    }

    #[test]
    fn condition_hand_value() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(2.5, 0.75);
        let (ok, margin) = uniqueness_condition(&h, &cfg, 1.0, 2).unwrap();
        let expected = 5.0 * (0.375 * PI).sin().powi(2) - 2.0;
        assert!(ok);
        assert!((margin - expected).abs() < 1e-12);
        assert!((margin - 2.268).abs() < 1e-3);
    }

    #[test]
    fn tau_alone_satisfies_condition() {
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1e-9, 0.01).with_tau(2.0 * 2.0 * 1.0 + 1e-9);
        assert!(uniqueness_condition(&h, &cfg, 1.0, 2).unwrap().0);
    }

    #[test]
    fn monotone_iff_enough_diffusion() {
        let h = Hamiltonian::EikonalSquared;
        assert!(check_monotonicity(&h, &SchemeConfig::new(2.0, 0.1), 2, 1.0, 2000, 1).unwrap());
        let weak = monotonicity_probe(&h, &SchemeConfig::new(0.1, 0.1), 2, 1.0, 2000, 1).unwrap();
        assert!(!weak.passed());
        assert!(weak.counterexample.is_some());
    }

    #[test]
    fn consistency_checks() {
        let h = Hamiltonian::EikonalSquared;
        assert!(check_consistency(&h, &SchemeConfig::new(3.0, 0.2), 2, 100, 0).unwrap());
        assert!(check_consistency(&h, &SchemeConfig::new(3.0, 0.2), 2, 0, 0).unwrap());
        assert!(!check_consistency(&h, &SchemeConfig::new(3.0, 0.2).with_tau(0.1), 2, 10, 0).unwrap());
    }

    #[test]
    fn stability_warning_threshold() {
        let cfg = SchemeConfig::new(1.0, 0.1).with_delta_t(0.05);
        assert!(cfg.stability_warning(2).is_some());
        let cfg = SchemeConfig::new(1.0, 0.1).with_delta_t(0.025);
        assert!(cfg.stability_warning(2).is_none());
    }
}
