//! Stochastic gradient descent on the Lax-Friedrichs loss, with fresh
//! batches at every step or a fixed pre-drawn dataset, and the staged
//! `(α, δ)` refinement schedule.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Domain, Sampler, SamplerSpec};
use crate::loss::{problem_value_and_grad, Batch, LossParts, LossWeights, Problem};
use crate::network::Network;
use crate::scheme::{uniqueness_condition, SchemeConfig};

/// Loss growth factor over the first batch loss that aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Constant { eta: f64 },
    Adam { eta: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Adam {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl StepRule {
    pub fn adam(eta: f64) -> Self {
        match Self::default() {
            StepRule::Adam { beta1, beta2, eps, .. } => StepRule::Adam { eta, beta1, beta2, eps },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Constant { eta } if eta > 0.0 && eta.is_finite() => Ok(()),
            StepRule::Adam { eta, beta1, beta2, eps }
                if eta > 0.0
                    && eta.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::Config(format!("invalid step rule {other:?}"))),
        }
    }
}

/// How batches are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Resample {
    /// Fresh points from the samplers at every iteration.
    #[default]
    EveryIteration,
    /// One dataset drawn up front holding `iterations / epochs` batches; each
    /// epoch shuffles it with `shuffle_seed` and walks it batch by batch.
    FixedDataset { epochs: usize, shuffle_seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSizes {
    /// Collocation points `N₀`.
    pub interior: usize,
    /// Boundary points `N_b₁`.
    #[serde(default)]
    pub boundary: usize,
    /// Supervised points `N_b₂`, drawn from the problem's finite set.
    #[serde(default)]
    pub supervised: usize,
    /// Initial-time points for evolution problems.
    #[serde(default)]
    pub initial: usize,
}

impl BatchSizes {
    pub fn new(interior: usize, boundary: usize) -> Self {
        Self {
            interior,
            boundary,
            supervised: 0,
            initial: 0,
        }
    }

    pub fn with_supervised(mut self, n: usize) -> Self {
        self.supervised = n;
        self
    }

    pub fn with_initial(mut self, n: usize) -> Self {
        self.initial = n;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub iterations: usize,
    pub batch_sizes: BatchSizes,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub resample: Resample,
}

impl SgdConfig {
    pub fn new(iterations: usize, batch_sizes: BatchSizes, step_rule: StepRule) -> Self {
        Self {
            iterations,
            batch_sizes,
            step_rule,
            resample: Resample::EveryIteration,
        }
    }

    pub fn with_resample(mut self, resample: Resample) -> Self {
        self.resample = resample;
        self
    }

    /// `iterations == 0` is accepted and leaves the parameters untouched.
    pub fn validate(&self) -> Result<()> {
        self.step_rule.validate()?;
        if self.batch_sizes.interior == 0 {
            return Err(Error::EmptyInteriorBatch);
        }
        if let Resample::FixedDataset { epochs, .. } = self.resample {
            if epochs == 0 || self.iterations % epochs != 0 {
                return Err(Error::Config(format!(
                    "fixed dataset needs epochs >= 1 dividing iterations ({} / {epochs})",
                    self.iterations
                )));
            }
        }
        Ok(())
    }
}

/// Adam moments, carried across stages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl OptimizerState {
    fn apply(&mut self, rule: &StepRule, theta: &mut [f64], grad: &[f64]) {
        match *rule {
            StepRule::Constant { eta } => {
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t -= eta * g;
                }
            }
            StepRule::Adam { eta, beta1, beta2, eps } => {
                if self.m.len() != theta.len() {
                    self.m = vec![0.0; theta.len()];
                    self.v = vec![0.0; theta.len()];
                    self.steps = 0;
                }
                self.steps += 1;
                let c1 = 1.0 - beta1.powf(self.steps as f64);
                let c2 = 1.0 - beta2.powf(self.steps as f64);
                for i in 0..theta.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    theta[i] -= eta * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Where training points come from. Implemented by [`Samplers`]; tests wrap
/// it to count calls.
pub trait PointSource {
    fn interior(&mut self, n: usize) -> Result<Vec<Vec<f64>>>;
    fn boundary(&mut self, n: usize) -> Result<Vec<(Vec<f64>, BoundaryTag)>>;
    /// Auxiliary uniform draw on `[0, 1)` (times, supervised picks).
    fn uniform(&mut self) -> f64;
    fn seed(&self) -> Option<u64> {
        None
    }
}

/// An interior sampler, a boundary sampler and an auxiliary stream.
#[derive(Clone, Debug)]
pub struct Samplers {
    interior: Sampler,
    boundary: Option<Sampler>,
    aux: ChaCha8Rng,
    seed: u64,
}

impl Samplers {
    /// `boundary` may be `None` for problems without boundary data.
    pub fn new(domain: &Domain, interior: &SamplerSpec, boundary: Option<&SamplerSpec>, seed: u64) -> Result<Self> {
        let mut aux = ChaCha8Rng::seed_from_u64(seed);
        aux.set_stream(2);
        Ok(Self {
            interior: Sampler::for_worker(domain, interior, 0)?,
            boundary: boundary.map(|b| Sampler::for_worker(domain, b, 1)).transpose()?,
            aux,
            seed,
        })
    }

    /// Uniform interior and uniform boundary sampling from one seed.
    pub fn uniform(domain: &Domain, seed: u64) -> Result<Self> {
        Self::new(
            domain,
            &SamplerSpec::uniform_interior(seed),
            Some(&SamplerSpec::uniform_boundary(seed)),
            seed,
        )
    }
}

impl PointSource for Samplers {
    fn interior(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        self.interior.interior(n)
    }

    fn boundary(&mut self, n: usize) -> Result<Vec<(Vec<f64>, BoundaryTag)>> {
        match &mut self.boundary {
            Some(s) => s.boundary(n),
            None => Err(Error::InvalidSampler("no boundary sampler configured".into())),
        }
    }

    fn uniform(&mut self) -> f64 {
        self.aux.random()
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// Draws one batch for `problem`. Evolution problems get interior times
/// uniform on `(0, T − δ_t)`, boundary times uniform on `(0, T)` and initial
/// points at `t = 0`. Supervised points are all of `Γ` when the requested
/// count covers it, otherwise i.i.d. picks from `Γ`.
pub fn draw_batch(problem: &Problem, sizes: &BatchSizes, cfg: &SchemeConfig, source: &mut dyn PointSource) -> Result<Batch> {
    if sizes.interior == 0 {
        return Err(Error::EmptyInteriorBatch);
    }
    let horizon = problem.horizon;
    let interior_span = match horizon {
        Some(t) => {
            let dt = cfg.delta_t.ok_or(Error::MissingTimeStep)?;
            if !(t > dt) {
                return Err(Error::InvalidArgument(format!("horizon {t} must exceed delta_t {dt}")));
            }
            Some(t - dt)
        }
        None => None,
    };
    let mut interior = source.interior(sizes.interior)?;
    if let Some(span) = interior_span {
        for x in &mut interior {
            x.push(span * source.uniform());
        }
    }
    let mut boundary = Vec::new();
    if sizes.boundary > 0 {
        for (mut x, tag) in source.boundary(sizes.boundary)? {
            let g = problem.boundary.value_for(tag);
            if let Some(t) = horizon {
                x.push(t * source.uniform());
            }
            boundary.push((x, g));
        }
    }
    let gamma = &problem.supervised;
    let supervised = if sizes.supervised == 0 || gamma.is_empty() {
        Vec::new()
    } else if sizes.supervised >= gamma.len() {
        gamma.clone()
    } else {
        (0..sizes.supervised)
            .map(|_| gamma[((source.uniform() * gamma.len() as f64) as usize).min(gamma.len() - 1)].clone())
            .collect()
    };
    let mut initial = Vec::new();
    if sizes.initial > 0 && horizon.is_some() {
        let u0 = problem
            .initial
            .as_ref()
            .ok_or_else(|| Error::Config("evolution problem has no initial condition".into()))?;
        for mut x in source.interior(sizes.initial)? {
            let v = u0.call(&x);
            x.push(0.0);
            initial.push((x, v));
        }
    }
    Ok(Batch {
        interior,
        boundary,
        supervised,
        initial,
    })
}

/// One row of a loss trace: the batch loss seen at `iteration`, before the
/// update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub total: f64,
    pub residual: f64,
    pub boundary: f64,
    pub supervised: f64,
    pub initial: f64,
    /// Milliseconds since the start of the run; excluded from determinism.
    pub wall_ms: f64,
}

impl TraceRow {
    fn new(iteration: usize, parts: &LossParts, wall_ms: f64) -> Self {
        Self {
            iteration,
            total: parts.total,
            residual: parts.residual,
            boundary: parts.boundary,
            supervised: parts.supervised,
            initial: parts.initial,
            wall_ms,
        }
    }

    /// Every field but the clock.
    pub fn same_losses(&self, other: &Self) -> bool {
        self.iteration == other.iteration
            && self.total.to_bits() == other.total.to_bits()
            && self.residual.to_bits() == other.residual.to_bits()
            && self.boundary.to_bits() == other.boundary.to_bits()
            && self.supervised.to_bits() == other.supervised.to_bits()
            && self.initial.to_bits() == other.initial.to_bits()
    }
}

/// Slices a pre-drawn batch into per-iteration batches.
struct FixedDataset {
    pool: Batch,
    batches_per_epoch: usize,
    sizes: BatchSizes,
    order: [Vec<usize>; 3],
    rng: ChaCha8Rng,
}

impl FixedDataset {
    fn draw(
        problem: &Problem,
        sgd: &SgdConfig,
        cfg: &SchemeConfig,
        source: &mut dyn PointSource,
        epochs: usize,
        shuffle_seed: u64,
    ) -> Result<Self> {
        let batches_per_epoch = (sgd.iterations / epochs).max(1);
        let b = &sgd.batch_sizes;
        let pooled = BatchSizes {
            interior: b.interior * batches_per_epoch,
            boundary: b.boundary * batches_per_epoch,
            supervised: b.supervised,
            initial: b.initial * batches_per_epoch,
        };
        let pool = draw_batch(problem, &pooled, cfg, source)?;
        let order = [
            (0..pool.interior.len()).collect(),
            (0..pool.boundary.len()).collect(),
            (0..pool.initial.len()).collect(),
        ];
        Ok(Self {
            pool,
            batches_per_epoch,
            sizes: *b,
            order,
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
        })
    }

    fn batch(&mut self, iteration: usize) -> Batch {
        let slot = iteration % self.batches_per_epoch;
        if slot == 0 {
            for o in &mut self.order {
                o.shuffle(&mut self.rng);
            }
        }
        let pick = |order: &[usize], n: usize| -> Vec<usize> { order[slot * n..(slot + 1) * n].to_vec() };
        Batch {
            interior: pick(&self.order[0], self.sizes.interior)
                .into_iter()
                .map(|i| self.pool.interior[i].clone())
                .collect(),
            boundary: pick(&self.order[1], self.sizes.boundary)
                .into_iter()
                .map(|i| self.pool.boundary[i].clone())
                .collect(),
            supervised: self.pool.supervised.clone(),
            initial: pick(&self.order[2], self.sizes.initial)
                .into_iter()
                .map(|i| self.pool.initial[i].clone())
                .collect(),
        }
    }
}

/// Runs `sgd.iterations` steps on `net`, returning the loss trace. Adam
/// moments live in `state` so callers can carry them across stages.
pub fn sgd_lxf_with_state(
    net: &mut Network,
    problem: &Problem,
    cfg: &SchemeConfig,
    w: &LossWeights,
    sgd: &SgdConfig,
    source: &mut dyn PointSource,
    state: &mut OptimizerState,
) -> Result<Vec<TraceRow>> {
    problem.validate()?;
    cfg.validate()?;
    w.validate()?;
    sgd.validate()?;
    if net.input_dim() != problem.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.input_dim(),
            got: net.input_dim(),
        });
    }
    if problem.is_time_dependent() && cfg.delta_t.is_none() {
        return Err(Error::MissingTimeStep);
    }
    let mut trace = Vec::with_capacity(sgd.iterations);
    if sgd.iterations == 0 {
        return Ok(trace);
    }
    let mut fixed = match sgd.resample {
        Resample::EveryIteration => None,
        Resample::FixedDataset { epochs, shuffle_seed } => {
            Some(FixedDataset::draw(problem, sgd, cfg, source, epochs, shuffle_seed)?)
        }
    };
    let start = Instant::now();
    let mut initial_loss = None;
    let mut theta = net.params().to_vec();
    for k in 0..sgd.iterations {
        let batch = match &mut fixed {
            Some(f) => f.batch(k),
            None => draw_batch(problem, &sgd.batch_sizes, cfg, source)?,
        };
        let (parts, grad) = problem_value_and_grad(net, problem, cfg, w, &batch)?;
        let reference = *initial_loss.get_or_insert(parts.total);
        if !parts.total.is_finite() || parts.total > DIVERGENCE_FACTOR * reference.max(1e-12) {
            return Err(Error::DivergenceDetected {
                iteration: k,
                loss: parts.total,
                initial: reference,
            });
        }
        trace.push(TraceRow::new(k, &parts, start.elapsed().as_secs_f64() * 1e3));
        state.apply(&sgd.step_rule, &mut theta, &grad);
        net.set_params(&theta)?;
    }
    Ok(trace)
}

/// [`sgd_lxf_with_state`] with fresh optimizer state.
pub fn sgd_lxf(
    net: &mut Network,
    problem: &Problem,
    cfg: &SchemeConfig,
    w: &LossWeights,
    sgd: &SgdConfig,
    source: &mut dyn PointSource,
) -> Result<Vec<TraceRow>> {
    sgd_lxf_with_state(net, problem, cfg, w, sgd, source, &mut OptimizerState::default())
}

/// One refinement stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub alpha: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default)]
    pub tau: f64,
    pub sgd: SgdConfig,
}

impl Stage {
    pub fn new(alpha: f64, delta: f64, sgd: SgdConfig) -> Self {
        Self {
            alpha,
            delta,
            delta_t: None,
            tau: 0.0,
            sgd,
        }
    }

    pub fn with_delta_t(mut self, delta_t: f64) -> Self {
        self.delta_t = Some(delta_t);
        self
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            alpha: self.alpha,
            delta: self.delta,
            tau: self.tau,
            delta_t: self.delta_t,
        }
    }
}

/// Stages with non-increasing `α` and `δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    stages: Vec<Stage>,
    /// Start every stage with fresh Adam moments.
    pub reset_optimizer: bool,
}

impl Schedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no stages".into()));
        }
        for (i, s) in stages.iter().enumerate() {
            s.scheme()
                .validate()
                .map_err(|e| Error::InvalidSchedule(format!("stage {i}: {e}")))?;
            s.sgd
                .validate()
                .map_err(|e| Error::InvalidSchedule(format!("stage {i}: {e}")))?;
        }
        for (i, pair) in stages.windows(2).enumerate() {
            if pair[1].alpha > pair[0].alpha || pair[1].delta > pair[0].delta {
                return Err(Error::InvalidSchedule(format!(
                    "stage {} increases alpha or delta: ({}, {}) -> ({}, {})",
                    i + 1,
                    pair[0].alpha,
                    pair[0].delta,
                    pair[1].alpha,
                    pair[1].delta
                )));
            }
        }
        Ok(Self {
            stages,
            reset_optimizer: false,
        })
    }

    /// Stages sharing one SGD configuration, from `(α, δ)` pairs.
    pub fn uniform(pairs: &[(f64, f64)], sgd: SgdConfig) -> Result<Self> {
        Self::new(pairs.iter().map(|&(a, d)| Stage::new(a, d, sgd)).collect())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn final_delta(&self) -> f64 {
        self.stages.last().map_or(0.0, |s| s.delta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub alpha: f64,
    pub delta: f64,
    /// Network Lipschitz estimate at the start of the stage.
    pub lipschitz: f64,
    /// `2α sin²(πδ/2) + τ/d − C_H(L̂)`.
    pub margin: f64,
    pub condition_holds: bool,
    pub trace: Vec<TraceRow>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
    pub wall_ms: f64,
    pub theta: Vec<f64>,
    pub seed: Option<u64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.stages.iter().rev().find_map(|s| s.trace.last()).map(|r| r.total)
    }
}

/// Runs every stage in turn, threading the parameters and optimizer state.
pub fn train_schedule(
    net: &mut Network,
    problem: &Problem,
    schedule: &Schedule,
    w: &LossWeights,
    source: &mut dyn PointSource,
) -> Result<TrainReport> {
    train_schedule_with(net, problem, schedule, w, source, |_, _| {})
}

/// [`train_schedule`] with a callback after each completed stage.
pub fn train_schedule_with(
    net: &mut Network,
    problem: &Problem,
    schedule: &Schedule,
    w: &LossWeights,
    source: &mut dyn PointSource,
    mut on_stage: impl FnMut(usize, &Network),
) -> Result<TrainReport> {
    let start = Instant::now();
    let mut state = OptimizerState::default();
    let mut stages = Vec::with_capacity(schedule.stages.len());
    let dim = problem.domain.dim();
    for (index, stage) in schedule.stages.iter().enumerate() {
        let wrap = |e: Error| Error::Stage {
            index,
            source: Box::new(e),
        };
        let cfg = stage.scheme();
        let lipschitz = net.lipschitz_estimate();
        let (condition_holds, margin) = if lipschitz > 0.0 {
            uniqueness_condition(&problem.hamiltonian, &cfg, lipschitz, dim).map_err(wrap)?
        } else {
            (true, 2.0 * cfg.alpha * (std::f64::consts::FRAC_PI_2 * cfg.delta).sin().powi(2))
        };
        if schedule.reset_optimizer {
            state = OptimizerState::default();
        }
        let stage_start = Instant::now();
        let trace = sgd_lxf_with_state(net, problem, &cfg, w, &stage.sgd, source, &mut state).map_err(wrap)?;
        stages.push(StageReport {
            alpha: stage.alpha,
            delta: stage.delta,
            lipschitz,
            margin,
            condition_holds,
            trace,
            wall_ms: stage_start.elapsed().as_secs_f64() * 1e3,
        });
        on_stage(index, net);
    }
    Ok(TrainReport {
        stages,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        theta: net.params().to_vec(),
        seed: source.seed(),
    })
}
