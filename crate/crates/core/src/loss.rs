//! Monte-Carlo estimators of the composite least-squares functional
//!
//! `J(Φ) = (1/N₀) Σ r(x)² + (γ₁/N_b₁) Σ (Φ − g)² + (γ₂/N_b₂) Σ (Φ − h)² + (γ₀/N_I) Σ (Φ(·, 0) − u₀)²`
//!
//! and its exact parameter gradient. For stationary problems `r` is the
//! Lax-Friedrichs residual; for evolution problems it is the explicit
//! Euler residual `Φ(x, t + δ_t) − Φ(x, t) + δ_t Ĥ_α(…)` on inputs `(x, t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Domain};
use crate::hamiltonian::Hamiltonian;
use crate::network::Network;
use crate::scheme::SchemeConfig;

/// Weights of the data terms; the residual term has weight one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Boundary misfit.
    #[serde(default = "one")]
    pub gamma1: f64,
    /// Supervised interior misfit.
    #[serde(default)]
    pub gamma2: f64,
    /// Initial-condition misfit.
    #[serde(default)]
    pub gamma0: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 0.0,
            gamma0: 0.0,
        }
    }
}

impl LossWeights {
    pub fn new(gamma1: f64, gamma2: f64, gamma0: f64) -> Self {
        Self { gamma1, gamma2, gamma0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma0", self.gamma0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Dirichlet data per boundary piece. `value` applies wherever no more
/// specific entry is given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryValues {
    #[serde(default)]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<f64>,
}

impl BoundaryValues {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            inner: None,
            outer: None,
        }
    }

    pub fn shells(inner: f64, outer: f64) -> Self {
        Self {
            value: 0.0,
            inner: Some(inner),
            outer: Some(outer),
        }
    }

    pub fn value_for(&self, tag: BoundaryTag) -> f64 {
        match tag {
            BoundaryTag::Inner => self.inner.unwrap_or(self.value),
            BoundaryTag::Outer => self.outer.unwrap_or(self.value),
            _ => self.value,
        }
    }
}

/// A shareable pointwise function, used for initial data.
#[derive(Clone)]
pub struct FieldFn(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl FieldFn {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn call(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for FieldFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FieldFn(..)")
    }
}

/// A boundary or initial value problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub domain: Domain,
    pub hamiltonian: Hamiltonian,
    pub boundary: BoundaryValues,
    /// Finite set `Γ` of interior points with known values.
    pub supervised: Vec<(Vec<f64>, f64)>,
    /// Initial data `u₀(x)` for evolution problems.
    pub initial: Option<FieldFn>,
    /// Final time `T` for evolution problems.
    pub horizon: Option<f64>,
}

impl Problem {
    pub fn stationary(domain: Domain, hamiltonian: Hamiltonian, boundary: BoundaryValues) -> Self {
        Self {
            domain,
            hamiltonian,
            boundary,
            supervised: Vec::new(),
            initial: None,
            horizon: None,
        }
    }

    pub fn evolution(domain: Domain, hamiltonian: Hamiltonian, initial: FieldFn, horizon: f64) -> Self {
        Self {
            domain,
            hamiltonian,
            boundary: BoundaryValues::default(),
            supervised: Vec::new(),
            initial: Some(initial),
            horizon: Some(horizon),
        }
    }

    pub fn with_supervised(mut self, points: Vec<(Vec<f64>, f64)>) -> Self {
        self.supervised = points;
        self
    }

    pub fn is_time_dependent(&self) -> bool {
        self.horizon.is_some()
    }

    /// Network input dimension: space, plus time for evolution problems.
    pub fn input_dim(&self) -> usize {
        self.domain.dim() + usize::from(self.is_time_dependent())
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.hamiltonian.validate()?;
        if let Some(d) = self.hamiltonian.required_dim() {
            if d != self.domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: self.domain.dim(),
                });
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("horizon must be > 0, got {t}")));
            }
        }
        for (x, v) in &self.supervised {
            if x.len() != self.input_dim() || !v.is_finite() {
                return Err(Error::InvalidArgument("supervised point has wrong dimension or non-finite value".into()));
            }
        }
        Ok(())
    }
}

/// One Monte-Carlo batch. All points are full network inputs (with the
/// time coordinate last for evolution problems).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub interior: Vec<Vec<f64>>,
    pub boundary: Vec<(Vec<f64>, f64)>,
    pub supervised: Vec<(Vec<f64>, f64)>,
    pub initial: Vec<(Vec<f64>, f64)>,
}

impl Batch {
    pub fn interior_only(interior: Vec<Vec<f64>>) -> Self {
        Self {
            interior,
            ..Self::default()
        }
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        if self.interior.is_empty() {
            return Err(Error::EmptyInteriorBatch);
        }
        let points = self
            .interior
            .iter()
            .chain(self.boundary.iter().map(|p| &p.0))
            .chain(self.supervised.iter().map(|p| &p.0))
            .chain(self.initial.iter().map(|p| &p.0));
        for x in points {
            if x.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: x.len(),
                });
            }
        }
        let values = self
            .boundary
            .iter()
            .chain(&self.supervised)
            .chain(&self.initial)
            .map(|p| p.1);
        if values.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("batch data values must be finite".into()));
        }
        Ok(())
    }
}

/// The total loss and each of its addends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub residual: f64,
    pub boundary: f64,
    pub supervised: f64,
    pub initial: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Stationary,
    Evolution,
}

/// Interior points per batched network pass.
const CHUNK: usize = 128;

/// Adds the squared residuals of `points` and, when `grad` is given,
/// `scale · r · ∇_θ r` for each of them. Every point contributes the
/// stencil `[x, x + δe₁, x − δe₁, …, (x, t + δ_t)]`.
fn residual_chunk(
    net: &Network,
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    mode: Mode,
    points: &[Vec<f64>],
    grad: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    let dim = net.input_dim();
    let d = match mode {
        Mode::Stationary => dim,
        Mode::Evolution => dim - 1,
    };
    let dt = match mode {
        Mode::Stationary => None,
        Mode::Evolution => Some(cfg.delta_t.ok_or(Error::MissingTimeStep)?),
    };
    let per = 1 + 2 * d + usize::from(dt.is_some());
    let delta = cfg.delta;
    let mut flat = Vec::with_capacity(points.len() * per * dim);
    for x in points {
        flat.extend_from_slice(x);
        for i in 0..d {
            for s in [delta, -delta] {
                let at = flat.len();
                flat.extend_from_slice(x);
                flat[at + i] += s;
            }
        }
        if let Some(step) = dt {
            let at = flat.len();
            flat.extend_from_slice(x);
            flat[at + d] += step;
        }
    }
    let want_grad = grad.is_some();
    let (vals, tape) = if want_grad {
        let (v, t) = net.eval_batch_with_tape(&flat)?;
        (v, Some(t))
    } else {
        (net.eval_batch(&flat)?, None)
    };
    let mut upstream = if want_grad { vec![0.0; vals.len()] } else { Vec::new() };
    let scale = grad.as_ref().map_or(0.0, |g| g.1);
    let time_factor = dt.unwrap_or(1.0);
    let mut avg = vec![0.0; d];
    let mut hp = vec![0.0; d];
    let mut sum = 0.0;
    for (j, x) in points.iter().enumerate() {
        let v = &vals[j * per..(j + 1) * per];
        let centre = v[0];
        let mut lap = 0.0;
        for i in 0..d {
            let (up, down) = (v[1 + 2 * i], v[2 + 2 * i]);
            avg[i] = (up - down) / (2.0 * delta);
            lap += up + down - 2.0 * centre;
        }
        let hat = h.eval_unchecked(&x[..d], &avg) - cfg.alpha * lap / (2.0 * delta) + cfg.tau * centre;
        let r = match dt {
            None => hat,
            Some(step) => v[per - 1] - centre + step * hat,
        };
        sum += r * r;
        if want_grad {
            let s = scale * r;
            let u = &mut upstream[j * per..(j + 1) * per];
            h.grad_p_into(&x[..d], &avg, &mut hp);
            let mut centre_coef = time_factor * (cfg.alpha * d as f64 / delta + cfg.tau);
            if dt.is_some() {
                centre_coef -= 1.0;
                u[per - 1] = s;
            }
            u[0] = s * centre_coef;
            for i in 0..d {
                u[1 + 2 * i] = s * time_factor * (hp[i] - cfg.alpha) / (2.0 * delta);
                u[2 + 2 * i] = s * time_factor * (-hp[i] - cfg.alpha) / (2.0 * delta);
            }
        }
    }
    if let (Some((g, _)), Some(tape)) = (grad, tape) {
        net.backward_batch(&tape, &upstream, g)?;
    }
    Ok(sum)
}

fn misfit_term(net: &Network, data: &[(Vec<f64>, f64)], weight: f64, grad: Option<&mut [f64]>) -> Result<f64> {
    if data.is_empty() || weight == 0.0 {
        return Ok(0.0);
    }
    let scale = weight / data.len() as f64;
    let flat: Vec<f64> = data.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let errors = |vals: &[f64]| -> Vec<f64> { vals.iter().zip(data).map(|(v, (_, target))| v - target).collect() };
    let e = match grad {
        Some(g) => {
            let (vals, tape) = net.eval_batch_with_tape(&flat)?;
            let e = errors(&vals);
            let up: Vec<f64> = e.iter().map(|e| 2.0 * scale * e).collect();
            net.backward_batch(&tape, &up, g)?;
            e
        }
        None => errors(&net.eval_batch(&flat)?),
    };
    Ok(scale * e.iter().map(|e| e * e).sum::<f64>())
}

fn evaluate(
    net: &Network,
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    w: &LossWeights,
    batch: &Batch,
    mode: Mode,
    mut grad: Option<&mut [f64]>,
) -> Result<LossParts> {
    batch.validate(net.input_dim())?;
    if mode == Mode::Evolution && cfg.delta_t.is_none() {
        return Err(Error::MissingTimeStep);
    }
    if let Some(dim) = h.required_dim() {
        let space = net.input_dim() - usize::from(mode == Mode::Evolution);
        if dim != space {
            return Err(Error::DimensionMismatch { expected: dim, got: space });
        }
    }
    let n0 = batch.interior.len() as f64;
    let mut residual = 0.0;
    for chunk in batch.interior.chunks(CHUNK) {
        residual += residual_chunk(net, h, cfg, mode, chunk, grad.as_deref_mut().map(|g| (g, 2.0 / n0)))?;
    }
    residual /= n0;
    let boundary = misfit_term(net, &batch.boundary, w.gamma1, grad.as_deref_mut())?;
    let supervised = misfit_term(net, &batch.supervised, w.gamma2, grad.as_deref_mut())?;
    let initial = misfit_term(net, &batch.initial, w.gamma0, grad.as_deref_mut())?;
    Ok(LossParts {
        total: residual + boundary + supervised + initial,
        residual,
        boundary,
        supervised,
        initial,
    })
}

/// Loss of a stationary problem batch.
pub fn loss_value(net: &Network, h: &Hamiltonian, cfg: &SchemeConfig, w: &LossWeights, batch: &Batch) -> Result<LossParts> {
    evaluate(net, h, cfg, w, batch, Mode::Stationary, None)
}

/// Exact parameter gradient of [`loss_value`].
pub fn loss_grad(net: &Network, h: &Hamiltonian, cfg: &SchemeConfig, w: &LossWeights, batch: &Batch) -> Result<Vec<f64>> {
    Ok(loss_value_and_grad(net, h, cfg, w, batch)?.1)
}

/// [`loss_value`] and [`loss_grad`] in one pass.
pub fn loss_value_and_grad(
    net: &Network,
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    w: &LossWeights,
    batch: &Batch,
) -> Result<(LossParts, Vec<f64>)> {
    let mut g = vec![0.0; net.num_params()];
    let parts = evaluate(net, h, cfg, w, batch, Mode::Stationary, Some(&mut g))?;
    Ok((parts, g))
}

/// Loss of an evolution problem batch with interior inputs `(x, t)`.
pub fn loss_value_time(net: &Network, h: &Hamiltonian, cfg: &SchemeConfig, w: &LossWeights, batch: &Batch) -> Result<LossParts> {
    evaluate(net, h, cfg, w, batch, Mode::Evolution, None)
}

/// Exact parameter gradient of [`loss_value_time`].
pub fn loss_grad_time(net: &Network, h: &Hamiltonian, cfg: &SchemeConfig, w: &LossWeights, batch: &Batch) -> Result<Vec<f64>> {
    Ok(loss_value_and_grad_time(net, h, cfg, w, batch)?.1)
}

/// [`loss_value_time`] and [`loss_grad_time`] in one pass.
pub fn loss_value_and_grad_time(
    net: &Network,
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    w: &LossWeights,
    batch: &Batch,
) -> Result<(LossParts, Vec<f64>)> {
    let mut g = vec![0.0; net.num_params()];
    let parts = evaluate(net, h, cfg, w, batch, Mode::Evolution, Some(&mut g))?;
    Ok((parts, g))
}

/// Dispatches on whether the problem is time dependent.
pub fn problem_value_and_grad(
    net: &Network,
    problem: &Problem,
    cfg: &SchemeConfig,
    w: &LossWeights,
    batch: &Batch,
) -> Result<(LossParts, Vec<f64>)> {
    if problem.is_time_dependent() {
        loss_value_and_grad_time(net, &problem.hamiltonian, cfg, w, batch)
    } else {
        loss_value_and_grad(net, &problem.hamiltonian, cfg, w, batch)
    }
}

/// Loss only, dispatching on whether the problem is time dependent.
pub fn problem_value(net: &Network, problem: &Problem, cfg: &SchemeConfig, w: &LossWeights, batch: &Batch) -> Result<LossParts> {
    if problem.is_time_dependent() {
        loss_value_time(net, &problem.hamiltonian, cfg, w, batch)
    } else {
        loss_value(net, &problem.hamiltonian, cfg, w, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MlpArchitecture;

    /// `Φ(x) = relu(x) − relu(−x) = x` on the real line.
    fn identity_net() -> Network {
        Network::from_parts(MlpArchitecture::new(1, vec![2]), vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0]).unwrap()
    }

    #[test]
    fn hand_evaluated_total() {
        let net = identity_net();
        let h = Hamiltonian::EikonalSquared;
        let cfg = SchemeConfig::new(1.0, 0.1);
        let batch = Batch {
            interior: vec![vec![0.5]],
            boundary: vec![(vec![1.0], 0.0)],
            ..Batch::default()
        };
        for gamma1 in [1.0, 2.5] {
            let parts = loss_value(&net, &h, &cfg, &LossWeights::new(gamma1, 0.0, 0.0), &batch).unwrap();
            assert!(parts.residual.abs() < 1e-28);
            assert!((parts.total - gamma1).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_interior_rejected() {
        let net = identity_net();
        let err = loss_value(&net, &Hamiltonian::EikonalSquared, &SchemeConfig::new(1.0, 0.1), &LossWeights::default(), &Batch::default());
        assert!(matches!(err, Err(Error::EmptyInteriorBatch)));
    }

    #[test]
    fn zero_weights_leave_residual_only() {
        let net = Network::init(MlpArchitecture::new(2, vec![8]), 1).unwrap();
        let batch = Batch {
            interior: vec![vec![0.1, 0.2], vec![-0.4, 0.3]],
            boundary: vec![(vec![1.0, 0.0], 0.0)],
            supervised: vec![(vec![0.0, 0.0], 1.0)],
            initial: Vec::new(),
        };
        let cfg = SchemeConfig::new(1.0, 0.3);
        let parts = loss_value(&net, &Hamiltonian::EikonalSquared, &cfg, &LossWeights::new(0.0, 0.0, 0.0), &batch).unwrap();
        assert_eq!(parts.total, parts.residual);
    }

    #[test]
    fn boundary_values_by_tag() {
        let b = BoundaryValues::shells(0.0, 5.0);
        assert_eq!(b.value_for(BoundaryTag::Inner), 0.0);
        assert_eq!(b.value_for(BoundaryTag::Outer), 5.0);
        assert_eq!(BoundaryValues::constant(2.0).value_for(BoundaryTag::Face(3)), 2.0);
    }
}
