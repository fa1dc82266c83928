//! Feedback controls from a trained value function and explicit Euler
//! rollouts of the Reeds-Shepp car and the two-car pursuit-evasion game.
//!
//! Partials are forward differences at the stencil width of the last
//! training stage. `sgn(0) = 0`, so a control coasts at exact ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::sgn;
use crate::network::wrap_angle;
use crate::scheme::ScalarField;

/// Default Euler step.
pub const DEFAULT_DT: f64 = 0.01;

/// Speed bound `σ` and inverse angular velocity `ρ`; the turning radius is `σρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarParams {
    pub sigma: f64,
    pub rho: f64,
}

impl CarParams {
    pub fn new(sigma: f64, rho: f64) -> Result<Self> {
        let p = Self { sigma, rho };
        p.validate()?;
        Ok(p)
    }

    /// Speed zero is allowed so a player can be frozen.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.rho > 0.0) || !self.sigma.is_finite() || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "car needs sigma >= 0 and rho > 0, got ({}, {})",
                self.sigma, self.rho
            )));
        }
        Ok(())
    }

    pub fn turning_radius(&self) -> f64 {
        self.sigma * self.rho
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    pub omega: f64,
}

impl CarState {
    pub fn new(x: f64, y: f64, omega: f64) -> Self {
        Self {
            x,
            y,
            omega: wrap_angle(omega),
        }
    }

    pub fn as_input(&self) -> [f64; 3] {
        [self.x, self.y, self.omega]
    }

    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Relative position `(X, Y) = evader − pursuer` and both headings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub x: f64,
    pub y: f64,
    pub omega_e: f64,
    pub omega_p: f64,
}

impl GameState {
    pub fn new(x: f64, y: f64, omega_e: f64, omega_p: f64) -> Self {
        Self {
            x,
            y,
            omega_e: wrap_angle(omega_e),
            omega_p: wrap_angle(omega_p),
        }
    }

    pub fn as_input(&self) -> [f64; 4] {
        [self.x, self.y, self.omega_e, self.omega_p]
    }

    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

fn forward_partials<const N: usize>(field: &(impl ScalarField + ?Sized), x: [f64; N], delta: f64) -> [f64; N] {
    let base = field.value(&x);
    let mut out = [0.0; N];
    for i in 0..N {
        let mut y = x;
        y[i] += delta;
        out[i] = (field.value(&y) - base) / delta;
    }
    out
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("difference step must be > 0, got {delta}")))
    }
}

/// Car controls `(a, b) = (−sgn(∂ₓΦ cos ω + ∂ᵧΦ sin ω), −sgn(∂_ωΦ))`.
pub fn car_feedback(field: &(impl ScalarField + ?Sized), delta: f64, s: &CarState) -> Result<(f64, f64)> {
    check_delta(delta)?;
    let [px, py, pw] = forward_partials(field, s.as_input(), delta);
    Ok((-sgn(px * s.omega.cos() + py * s.omega.sin()), -sgn(pw)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameControls {
    pub a_e: f64,
    pub b_e: f64,
    pub a_p: f64,
    pub b_p: f64,
}

/// The pursuer descends the value, the evader ascends it.
pub fn game_feedback(field: &(impl ScalarField + ?Sized), delta: f64, s: &GameState) -> Result<GameControls> {
    check_delta(delta)?;
    let [px, py, pe, pp] = forward_partials(field, s.as_input(), delta);
    Ok(GameControls {
        a_e: sgn(px * s.omega_e.cos() + py * s.omega_e.sin()),
        b_e: sgn(pe),
        a_p: -sgn(px * s.omega_p.cos() + py * s.omega_p.sin()),
        b_p: -sgn(pp),
    })
}

/// Integration settings shared by both rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    /// Forward-difference step for the feedback partials.
    pub fd_delta: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl RolloutSettings {
    pub fn new(t_max: f64, fd_delta: f64) -> Self {
        Self {
            dt: DEFAULT_DT,
            t_max,
            fd_delta,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn validate(&self) -> Result<()> {
        check_delta(self.fd_delta)?;
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rollout needs dt > 0 and t_max >= 0, got ({}, {})",
                self.dt, self.t_max
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "time", rename_all = "snake_case")]
pub enum CarOutcome {
    ReachedTarget(f64),
    Timeout,
}

/// One row of a car trajectory: the state at `t` and the controls applied
/// from it (zero on the terminal row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarStep {
    pub t: f64,
    pub state: CarState,
    pub a: f64,
    pub b: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarRollout {
    pub steps: Vec<CarStep>,
    pub outcome: CarOutcome,
}

/// One Euler step of the car dynamics under fixed controls.
pub fn car_step(params: &CarParams, s: &CarState, a: f64, b: f64, dt: f64) -> CarState {
    CarState {
        x: s.x + dt * params.sigma * a * s.omega.cos(),
        y: s.y + dt * params.sigma * a * s.omega.sin(),
        omega: wrap_angle(s.omega + dt * b / params.rho),
    }
}

/// Rolls the car out under the control law `policy` until it enters the
/// target disc or time runs out.
pub fn rollout_car_with(
    params: &CarParams,
    s0: CarState,
    settings: &RolloutSettings,
    target_radius: f64,
    mut policy: impl FnMut(&CarState) -> Result<(f64, f64)>,
) -> Result<CarRollout> {
    params.validate()?;
    settings.validate()?;
    let mut s = CarState::new(s0.x, s0.y, s0.omega);
    let mut steps = Vec::new();
    for k in 0..=settings.steps() {
        let t = k as f64 * settings.dt;
        if s.distance() <= target_radius {
            steps.push(CarStep {
                t,
                state: s,
                a: 0.0,
                b: 0.0,
                distance: s.distance(),
            });
            return Ok(CarRollout {
                steps,
                outcome: CarOutcome::ReachedTarget(t),
            });
        }
        if t >= settings.t_max {
            steps.push(CarStep {
                t,
                state: s,
                a: 0.0,
                b: 0.0,
                distance: s.distance(),
            });
            break;
        }
        let (a, b) = policy(&s)?;
        steps.push(CarStep {
            t,
            state: s,
            a,
            b,
            distance: s.distance(),
        });
        s = car_step(params, &s, a, b, settings.dt);
    }
    Ok(CarRollout {
        steps,
        outcome: CarOutcome::Timeout,
    })
}

/// Rollout under the network feedback.
pub fn rollout_car(
    field: &(impl ScalarField + ?Sized),
    params: &CarParams,
    s0: CarState,
    settings: &RolloutSettings,
    target_radius: f64,
) -> Result<CarRollout> {
    rollout_car_with(params, s0, settings, target_radius, |s| car_feedback(field, settings.fd_delta, s))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "time", rename_all = "snake_case")]
pub enum GameOutcome {
    Captured(f64),
    Escaped(f64),
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameStep {
    pub t: f64,
    pub state: GameState,
    pub controls: GameControls,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRollout {
    pub steps: Vec<GameStep>,
    pub outcome: GameOutcome,
}

impl GameRollout {
    /// `(t, distance)` pairs for plotting the separation of the players.
    pub fn distance_trace(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.t, s.distance)).collect()
    }
}

/// One Euler step of the relative game dynamics.
pub fn game_step(evader: &CarParams, pursuer: &CarParams, s: &GameState, c: &GameControls, dt: f64) -> GameState {
    GameState {
        x: s.x + dt * (evader.sigma * c.a_e * s.omega_e.cos() - pursuer.sigma * c.a_p * s.omega_p.cos()),
        y: s.y + dt * (evader.sigma * c.a_e * s.omega_e.sin() - pursuer.sigma * c.a_p * s.omega_p.sin()),
        omega_e: wrap_angle(s.omega_e + dt * c.b_e / evader.rho),
        omega_p: wrap_angle(s.omega_p + dt * c.b_p / pursuer.rho),
    }
}

/// Radii that end the game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameArena {
    pub capture_radius: f64,
    pub escape_radius: f64,
}

/// Rolls the game out under the control law `policy`.
pub fn rollout_game_with(
    evader: &CarParams,
    pursuer: &CarParams,
    s0: GameState,
    settings: &RolloutSettings,
    arena: &GameArena,
    mut policy: impl FnMut(&GameState) -> Result<GameControls>,
) -> Result<GameRollout> {
    evader.validate()?;
    pursuer.validate()?;
    settings.validate()?;
    if !(arena.capture_radius < arena.escape_radius) {
        return Err(Error::InvalidArgument("capture radius must be below escape radius".into()));
    }
    let idle = GameControls {
        a_e: 0.0,
        b_e: 0.0,
        a_p: 0.0,
        b_p: 0.0,
    };
    let mut s = GameState::new(s0.x, s0.y, s0.omega_e, s0.omega_p);
    let mut steps = Vec::new();
    for k in 0..=settings.steps() {
        let t = k as f64 * settings.dt;
        let dist = s.distance();
        let terminal = if dist <= arena.capture_radius {
            Some(GameOutcome::Captured(t))
        } else if dist >= arena.escape_radius {
            Some(GameOutcome::Escaped(t))
        } else if t >= settings.t_max {
            Some(GameOutcome::Timeout)
        } else {
            None
        };
        if let Some(outcome) = terminal {
            steps.push(GameStep {
                t,
                state: s,
                controls: idle,
                distance: dist,
            });
            return Ok(GameRollout { steps, outcome });
        }
        let c = policy(&s)?;
        steps.push(GameStep {
            t,
            state: s,
            controls: c,
            distance: dist,
        });
        s = game_step(evader, pursuer, &s, &c, settings.dt);
    }
    Ok(GameRollout {
        steps,
        outcome: GameOutcome::Timeout,
    })
}

/// Rollout with both players following the network feedback.
pub fn rollout_game(
    field: &(impl ScalarField + ?Sized),
    evader: &CarParams,
    pursuer: &CarParams,
    s0: GameState,
    settings: &RolloutSettings,
    arena: &GameArena,
) -> Result<GameRollout> {
    rollout_game_with(evader, pursuer, s0, settings, arena, |s| game_feedback(field, settings.fd_delta, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(x: &[f64]) -> f64 {
        x[0].hypot(x[1])
    }

    #[test]
    fn radial_field_on_x_axis() {
        let (a, b) = car_feedback(&radial, 0.01, &CarState::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((a, b), (-1.0, 0.0));
        let neg = |x: &[f64]| -radial(x);
        let (a, b) = car_feedback(&neg, 0.01, &CarState::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((a, b), (1.0, 0.0));
    }

    #[test]
    fn forced_straight_line() {
        let params = CarParams::new(1.5, 1.0).unwrap();
        let settings = RolloutSettings::new(1.0, 0.1).with_dt(0.125);
        let out = rollout_car_with(&params, CarState::new(1.0, 0.0, 0.0), &settings, 0.1, |_| Ok((1.0, 0.0))).unwrap();
        assert_eq!(out.outcome, CarOutcome::Timeout);
        let last = out.steps.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!((last.state.x - (1.0 + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn start_inside_target() {
        let params = CarParams::new(1.0, 1.0).unwrap();
        let out = rollout_car(&radial, &params, CarState::new(0.1, 0.0, 1.0), &RolloutSettings::new(5.0, 0.1), 0.2).unwrap();
        assert_eq!(out.outcome, CarOutcome::ReachedTarget(0.0));
    }

    #[test]
    fn game_starts_captured() {
        let p = CarParams::new(1.0, 1.0).unwrap();
        let arena = GameArena {
            capture_radius: 0.2,
            escape_radius: 4.0,
        };
        let out = rollout_game(&radial, &p, &p, GameState::new(0.2, 0.0, 0.0, 0.0), &RolloutSettings::new(5.0, 0.1), &arena).unwrap();
        assert_eq!(out.outcome, GameOutcome::Captured(0.0));
    }

    #[test]
    fn zero_partials_coast() {
        let flat = |_: &[f64]| 1.0;
        let c = game_feedback(&flat, 0.1, &GameState::new(1.0, 1.0, 0.3, 0.2)).unwrap();
        assert_eq!((c.a_e, c.b_e, c.a_p, c.b_p), (0.0, 0.0, 0.0, 0.0));
    }
}
