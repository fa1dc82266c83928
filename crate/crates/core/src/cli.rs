//! Experiment runner: JSON configs in, parameter files, CSV tables and JSON
//! reports out.
//!
//! Exit codes are `0` on success, `1` when the numerics fail (divergence,
//! non-convergence) and `2` for usage or configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::control::{
    rollout_car, rollout_game, CarOutcome, CarParams, CarState, GameArena, GameOutcome, GameState, RolloutSettings,
    DEFAULT_DT,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    is_success, mse_linf, mse_linf_spacetime, residual_cross_section, residual_field, CrossSection, MetricReport,
    SignCriterion, SuccessRate, DEFAULT_EVAL_SAMPLES,
};
use crate::geometry::{uniform_interior, Domain, SamplerKind, SamplerSpec};
use crate::grid_oracle::{
    assemble_adjoint, numerical_laplacian_eigenvalue, riccati_initial_matrix, sigma_min_lower_bound,
    smallest_laplacian_eigenvalue, solve_fd_fixed_point, GridSpec, GroundTruth,
};
use crate::hamiltonian::Hamiltonian;
use crate::loss::{BoundaryValues, FieldFn, LossWeights, Problem};
use crate::network::{Architecture, Network};
use crate::scheme::uniqueness_condition;
use crate::trainer::{
    train_schedule_with, BatchSizes, Resample, Samplers, Schedule, SgdConfig, Stage, StepRule, TrainReport,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "HJSOLVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hjsolve", version, about = "Least-squares Lax-Friedrichs solvers for Hamilton-Jacobi equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network per seed along the configured schedule.
    Train(CommonArgs),
    /// Score a trained network against the ground truth and export residuals.
    Evaluate(CommonArgs),
    /// Run the dense grid checks: spectra, fixed-point solves, adjoint bounds.
    Oracle(CommonArgs),
    /// Simulate feedback trajectories from a trained value function.
    Rollout(CommonArgs),
    /// Success rates over seeds and an (alpha, delta) grid.
    Sweep(CommonArgs),
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Single seed overriding the config's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent replicas run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV of initial states for `rollout`.
    #[arg(long)]
    pub states: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupervisedRegion {
    Uniform,
    /// Uniform in the ball of `radius` around `center`, intersected with the domain.
    Localized { center: Vec<f64>, radius: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    /// Number of points in the finite set, labelled by the ground truth.
    #[serde(default)]
    pub count: usize,
    #[serde(default = "uniform_region")]
    pub region: SupervisedRegion,
    #[serde(default)]
    pub seed: u64,
    /// CSV of `x…, value` rows used instead of generated points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_file: Option<PathBuf>,
}

fn uniform_region() -> SupervisedRegion {
    SupervisedRegion::Uniform
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `u₀(x) = (⟨x, A x⟩ − 1)/2` with `A = diag(diag)`, by default
    /// `diag(4/25, 1, …)`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diag: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Distance,
    Riccati,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: Domain,
    pub hamiltonian: Hamiltonian,
    #[serde(default)]
    pub boundary: BoundaryValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised: Option<SupervisedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<TruthKind>,
}

/// One schedule entry; unset SGD fields fall back to the shared settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub alpha: f64,
    pub delta: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default)]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_sizes: Option<BatchSizes>,
    /// Overrides `sgd.step_rule` for this stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepRule>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSettings {
    pub batch_sizes: BatchSizes,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub resample: Resample,
    #[serde(default)]
    pub reset_optimizer: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "uniform_interior_kind")]
    pub interior: SamplerKind,
    #[serde(default = "uniform_boundary_kind")]
    pub boundary: SamplerKind,
}

fn uniform_interior_kind() -> SamplerKind {
    SamplerKind::UniformInterior
}

fn uniform_boundary_kind() -> SamplerKind {
    SamplerKind::UniformBoundary
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            interior: uniform_interior_kind(),
            boundary: uniform_boundary_kind(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "yes")]
    pub include_origin: bool,
    #[serde(default)]
    pub seed: u64,
    /// Cells per axis of the residual lattice; `0` skips the export.
    #[serde(default)]
    pub residual_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_section: Option<CrossSection>,
}

fn default_samples() -> usize {
    DEFAULT_EVAL_SAMPLES
}

fn yes() -> bool {
    true
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            include_origin: true,
            seed: 0,
            residual_resolution: 0,
            cross_section: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCase {
    pub dim: usize,
    pub n: usize,
    pub alpha: f64,
    #[serde(default = "default_oracle_iters")]
    pub max_iters: usize,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
}

fn default_oracle_iters() -> usize {
    200_000
}

fn default_oracle_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub cases: Vec<OracleCase>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RolloutConfig {
    Car {
        car: CarParams,
        target_radius: f64,
        #[serde(default = "default_dt")]
        dt: f64,
        /// Defaults to three times the straight-line travel time.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_max: Option<f64>,
        /// Defaults to the last stage's `delta`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fd_delta: Option<f64>,
    },
    Game {
        evader: CarParams,
        pursuer: CarParams,
        arena: GameArena,
        #[serde(default = "default_dt")]
        dt: f64,
        t_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fd_delta: Option<f64>,
    },
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub iterations: usize,
    #[serde(default)]
    pub criterion: SignCriterion,
    /// Extra iterations granted to a run with the wrong sign before it is
    /// scored again; `0` disables the retry.
    #[serde(default)]
    pub retry_iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemConfig,
    pub network: Architecture,
    pub schedule: Vec<StageConfig>,
    pub sgd: SgdSettings,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(sup) = cfg.problem.supervised.as_mut() {
            if let Some(p) = sup.points_file.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        p.domain.validate()?;
        p.hamiltonian.validate()?;
        let input = p.domain.dim() + usize::from(p.horizon.is_some());
        if self.network.input_dim() != input {
            return Err(Error::Config(format!(
                "network input_dim {} does not match the problem ({input})",
                self.network.input_dim()
            )));
        }
        self.network.validate()?;
        if p.horizon.is_some() != p.initial.is_some() {
            return Err(Error::Config("horizon and initial must be given together".into()));
        }
        if let Some(sup) = &p.supervised {
            if let Some(f) = &sup.points_file {
                if !f.exists() {
                    return Err(Error::Config(format!("supervised points file {} does not exist", f.display())));
                }
            } else if sup.count > 0 && p.ground_truth.is_none() {
                return Err(Error::Config("generated supervised points need a ground_truth".into()));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.schedule_for(None)?;
        Ok(())
    }

    /// The training schedule, with every stage's iteration count replaced by
    /// `iterations` when given.
    pub fn schedule_for(&self, iterations: Option<usize>) -> Result<Schedule> {
        let stages = self
            .schedule
            .iter()
            .map(|s| Stage {
                alpha: s.alpha,
                delta: s.delta,
                delta_t: s.delta_t,
                tau: s.tau,
                sgd: SgdConfig {
                    iterations: iterations.unwrap_or(s.iterations),
                    batch_sizes: s.batch_sizes.unwrap_or(self.sgd.batch_sizes),
                    step_rule: s.step_rule.unwrap_or(self.sgd.step_rule),
                    resample: self.sgd.resample,
                },
            })
            .collect();
        let mut schedule = Schedule::new(stages)?;
        schedule.reset_optimizer = self.sgd.reset_optimizer;
        Ok(schedule)
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        let p = &self.problem;
        Ok(match p.ground_truth {
            None => None,
            Some(TruthKind::Distance) => Some(GroundTruth::distance_to_boundary(&p.domain)?),
            Some(TruthKind::Riccati) => {
                let t = p.horizon.ok_or_else(|| Error::Config("riccati ground truth needs a horizon".into()))?;
                Some(GroundTruth::riccati(p.domain.dim(), t)?)
            }
        })
    }

    /// Builds the problem, generating supervised points when requested.
    pub fn build_problem(&self) -> Result<Problem> {
        let p = &self.problem;
        let mut problem = Problem::stationary(p.domain.clone(), p.hamiltonian.clone(), p.boundary.clone());
        problem.horizon = p.horizon;
        if let Some(InitialConfig::Quadratic { diag }) = &p.initial {
            let dim = p.domain.dim();
            let diag = match diag {
                Some(d) if d.len() == dim => d.clone(),
                Some(d) => return Err(Error::DimensionMismatch { expected: dim, got: d.len() }),
                None => riccati_initial_matrix(dim).diagonal().iter().copied().collect(),
            };
            problem.initial = Some(FieldFn::new(move |x: &[f64]| {
                0.5 * (x.iter().zip(&diag).map(|(v, a)| a * v * v).sum::<f64>() - 1.0)
            }));
        }
        if let Some(sup) = &p.supervised {
            problem.supervised = match &sup.points_file {
                Some(f) => read_points_with_values(f, problem.input_dim())?,
                None if sup.count == 0 => Vec::new(),
                None => {
                    let truth = self.ground_truth()?.ok_or_else(|| Error::Config("missing ground truth".into()))?;
                    generate_supervised(&p.domain, &truth, sup)?
                }
            };
        }
        problem.validate()?;
        Ok(problem)
    }

    fn samplers(&self, seed: u64) -> Result<Samplers> {
        let needs_boundary = self.schedule.iter().any(|s| s.batch_sizes.unwrap_or(self.sgd.batch_sizes).boundary > 0);
        let boundary = SamplerSpec::new(self.sampling.boundary.clone(), seed);
        Samplers::new(
            &self.problem.domain,
            &SamplerSpec::new(self.sampling.interior.clone(), seed),
            needs_boundary.then_some(&boundary),
            seed,
        )
    }
}

fn generate_supervised(domain: &Domain, truth: &GroundTruth, sup: &SupervisedConfig) -> Result<Vec<(Vec<f64>, f64)>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sup.seed);
    let mut out = Vec::with_capacity(sup.count);
    let mut attempts = 0usize;
    while out.len() < sup.count {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::Config("localized supervised region misses the domain".into()));
        }
        let x = match &sup.region {
            SupervisedRegion::Uniform => uniform_interior(domain, &mut rng),
            SupervisedRegion::Localized { center, radius } => {
                let ball = Domain::Ball {
                    center: center.clone(),
                    radius: *radius,
                };
                let x = uniform_interior(&ball, &mut rng);
                if !domain.contains(&x) {
                    continue;
                }
                x
            }
        };
        let v = truth.value(&x);
        out.push((x, v));
    }
    Ok(out)
}

/// Reads numeric CSV rows, skipping `#` lines and a non-numeric header.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("{} row {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

fn read_points_with_values(path: &Path, dim: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    read_numeric_csv(path)?
        .into_iter()
        .map(|mut r| {
            if r.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    got: r.len(),
                });
            }
            let v = r.pop().unwrap_or_default();
            Ok((r, v))
        })
        .collect()
}

/// CSV writer emitting one `#` metadata line and a column header.
pub struct CsvOut {
    inner: csv::Writer<fs::File>,
}

impl CsvOut {
    pub fn create(path: &Path, command: &str, config: &ExperimentConfig, seed: Option<u64>, columns: &[&str]) -> Result<Self> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{}", metadata_line(command, config, seed)?)?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(columns).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.inner.write_record(values.iter().map(|v| v.to_string())).map_err(csv_err)
    }

    pub fn record<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn metadata_line(command: &str, config: &ExperimentConfig, seed: Option<u64>) -> Result<String> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    Ok(format!(
        "# hjsolve {command} timestamp={stamp} seed={seed} config={}",
        serde_json::to_string(config)?
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Worker cap from `--jobs` and the environment.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(usize::MAX);
    jobs.max(1).min(cap)
}

/// Runs `f` on every item with at most `jobs` concurrent workers and
/// returns results in input order.
fn run_replicas<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = worker_count(jobs).min(items.len().max(1));
    if jobs <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> = items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every replica ran"))
        .collect()
}

/// Metrics of `net` against `truth`, in space or space-time.
pub fn score(cfg: &ExperimentConfig, net: &Network, truth: &GroundTruth) -> Result<MetricReport> {
    let ev = &cfg.evaluation;
    match cfg.problem.horizon {
        Some(t) => mse_linf_spacetime(net, truth, &cfg.problem.domain, t, ev.samples, ev.seed),
        None => mse_linf(net, truth, &cfg.problem.domain, ev.samples, ev.include_origin, ev.seed),
    }
}

/// Outcome of one training replica.
pub struct TrainRun {
    pub seed: u64,
    pub net: Network,
    pub report: TrainReport,
    /// Metrics after each stage when a ground truth is configured.
    pub stage_metrics: Vec<MetricReport>,
}

/// Trains one replica as configured.
pub fn train_run(cfg: &ExperimentConfig, seed: u64) -> Result<TrainRun> {
    let problem = cfg.build_problem()?;
    let schedule = cfg.schedule_for(None)?;
    let truth = cfg.ground_truth()?;
    let mut net = Network::init(cfg.network.clone(), seed)?;
    let mut samplers = cfg.samplers(seed)?;
    let mut stage_metrics = Vec::new();
    let mut metric_err = None;
    let report = train_schedule_with(&mut net, &problem, &schedule, &cfg.weights, &mut samplers, |_, n| {
        if let Some(t) = &truth {
            match score(cfg, n, t) {
                Ok(m) => stage_metrics.push(m),
                Err(e) => metric_err = Some(e),
            }
        }
    })?;
    if let Some(e) = metric_err {
        return Err(e);
    }
    Ok(TrainRun {
        seed,
        net,
        report,
        stage_metrics,
    })
}

fn output_dir(cfg: &ExperimentConfig, args: &CommonArgs) -> Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn seeds(cfg: &ExperimentConfig, args: &CommonArgs) -> Vec<u64> {
    args.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

pub fn cmd_train(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = output_dir(&cfg, args)?;
    let seeds = seeds(&cfg, args);
    let results = run_replicas(&seeds, args.jobs, |&seed| train_run(&cfg, seed));
    let mut first_err = None;
    for (seed, res) in seeds.iter().zip(results) {
        let run = match res {
            Ok(r) => r,
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                first_err.get_or_insert(e);
                continue;
            }
        };
        run.net.save(dir.join(format!("theta_seed{seed}.hjnn")))?;
        let mut trace = CsvOut::create(
            &dir.join(format!("trace_seed{seed}.csv")),
            "train",
            &cfg,
            Some(*seed),
            &["stage", "iteration", "total", "residual_part", "boundary_part", "supervised_part", "initial_part"],
        )?;
        for (k, st) in run.report.stages.iter().enumerate() {
            for r in &st.trace {
                trace.row(&[k as f64, r.iteration as f64, r.total, r.residual, r.boundary, r.supervised, r.initial])?;
            }
        }
        trace.finish()?;
        let stages: Vec<_> = run
            .report
            .stages
            .iter()
            .enumerate()
            .map(|(k, s)| {
                json!({
                    "alpha": s.alpha,
                    "delta": s.delta,
                    "lipschitz": s.lipschitz,
                    "margin": s.margin,
                    "condition_holds": s.condition_holds,
                    "final_loss": s.trace.last().map(|r| r.total),
                    "wall_ms": s.wall_ms,
                    "metrics": run.stage_metrics.get(k),
                })
            })
            .collect();
        write_json(
            &dir.join(format!("report_seed{seed}.json")),
            &json!({"seed": seed, "config": cfg, "wall_ms": run.report.wall_ms, "stages": stages}),
        )?;
        println!(
            "seed {seed}: final loss {:?}{}",
            run.report.final_loss(),
            run.stage_metrics.last().map_or(String::new(), |m| format!(", mse {:e}, linf {:e}", m.mse, m.linf))
        );
    }
    first_err.map_or(Ok(()), Err)
}

fn load_theta(args: &CommonArgs, cfg: &ExperimentConfig) -> Result<Network> {
    let path = args
        .theta
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--theta is required".into()))?;
    let net = Network::load(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidThetaFile(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if net.architecture() != &cfg.network {
        return Err(Error::Config("parameter file architecture differs from the config".into()));
    }
    Ok(net)
}

pub fn cmd_evaluate(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let net = load_theta(args, &cfg)?;
    let dir = output_dir(&cfg, args)?;
    let mut report = json!({"config": cfg, "seed": cfg.evaluation.seed});
    if let Some(truth) = cfg.ground_truth()? {
        let m = score(&cfg, &net, &truth)?;
        println!("mse {:e}, linf {:e} over {} samples", m.mse, m.linf, m.n_samples);
        report["metrics"] = serde_json::to_value(m)?;
    }
    let last = cfg.schedule_for(None)?.stages().last().cloned().ok_or_else(|| Error::Config("empty schedule".into()))?;
    let scheme = last.scheme();
    let stationary = cfg.problem.horizon.is_none();
    if stationary && cfg.evaluation.residual_resolution > 0 {
        let field = residual_field(&net, &cfg.problem.hamiltonian, &scheme, &cfg.problem.domain, cfg.evaluation.residual_resolution)?;
        let dim = cfg.problem.domain.dim();
        let mut cols: Vec<String> = (0..dim).map(|i| format!("x{}", i + 1)).collect();
        cols.push("squared_residual".into());
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut out = CsvOut::create(&dir.join("residual_field.csv"), "evaluate", &cfg, Some(cfg.evaluation.seed), &col_refs)?;
        for (x, v) in field.points.iter().zip(&field.values) {
            let mut row = x.clone();
            row.push(*v);
            out.row(&row)?;
        }
        out.finish()?;
        println!("residual mean {:e}, max {:e}", field.mean, field.max);
        report["residual"] = json!({"mean": field.mean, "max": field.max, "nodes": field.values.len()});
    }
    if let (true, Some(section)) = (stationary, &cfg.evaluation.cross_section) {
        let rows = residual_cross_section(&net, &cfg.problem.hamiltonian, &scheme, &cfg.problem.domain, section)?;
        let mut out = CsvOut::create(&dir.join("residual_section.csv"), "evaluate", &cfg, Some(cfg.evaluation.seed), &["a", "b", "value"])?;
        for (a, b, v) in rows {
            out.row(&[a, b, v])?;
        }
        out.finish()?;
    }
    write_json(&dir.join("metrics.json"), &report)
}

pub fn cmd_oracle(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let oracle = cfg.oracle.clone().ok_or_else(|| Error::Config("config has no oracle section".into()))?;
    let dir = output_dir(&cfg, args)?;
    let h = &cfg.problem.hamiltonian;
    let g = cfg.problem.boundary.value;
    let mut out = CsvOut::create(
        &dir.join("oracle.csv"),
        "oracle",
        &cfg,
        None,
        &[
            "dim", "n", "delta", "alpha", "lambda_analytic", "lambda_numeric", "iterations", "max_residual", "lipschitz",
            "margin", "sigma_min", "sigma_lower_bound",
        ],
    )?;
    let mut cases = Vec::new();
    let mut failure = None;
    for case in &oracle.cases {
        let grid = GridSpec::new(case.dim, case.n)?;
        let scheme = grid.scheme(case.alpha);
        let analytic = smallest_laplacian_eigenvalue(&grid);
        let numeric = numerical_laplacian_eigenvalue(&grid);
        let sol = match solve_fd_fixed_point(h, &scheme, &grid, |_| g, None, case.max_iters, case.tol) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("case dim={} n={}: {e}", case.dim, case.n);
                failure.get_or_insert(e);
                continue;
            }
        };
        let lip = sol.u.lipschitz();
        let margin = if lip > 0.0 {
            uniqueness_condition(h, &scheme, lip, case.dim)?.1
        } else {
            2.0 * case.alpha * (std::f64::consts::FRAC_PI_2 * grid.delta()).sin().powi(2)
        };
        let adjoint = assemble_adjoint(h, &scheme, &grid, &sol.u)?;
        let sigma = adjoint.sigma_min();
        let bound = sigma_min_lower_bound(&grid, case.alpha, adjoint.max_abs_v());
        out.row(&[
            case.dim as f64, case.n as f64, grid.delta(), case.alpha, analytic, numeric, sol.iterations as f64, sol.residual, lip,
            margin, sigma, bound,
        ])?;
        let mut values = CsvOut::create(
            &dir.join(format!("solution_d{}_n{}.csv", case.dim, case.n)),
            "oracle",
            &cfg,
            None,
            &(0..case.dim).map(|i| ["b1", "b2", "b3", "b4"].get(i).copied().unwrap_or("b")).chain(["value"]).collect::<Vec<_>>(),
        )?;
        for row in sol.u.csv_rows() {
            values.record(row)?;
        }
        values.finish()?;
        cases.push(json!({"dim": case.dim, "n": case.n, "alpha": case.alpha, "lambda_analytic": analytic,
            "lambda_numeric": numeric, "sigma_min": sigma, "sigma_lower_bound": bound, "margin": margin}));
    }
    out.finish()?;
    write_json(&dir.join("oracle.json"), &json!({"config": cfg, "cases": cases}))?;
    failure.map_or(Ok(()), Err)
}

pub fn cmd_rollout(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let net = load_theta(args, &cfg)?;
    let rollout = cfg.rollout.clone().ok_or_else(|| Error::Config("config has no rollout section".into()))?;
    let states_path = args
        .states
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--states is required".into()))?;
    if !states_path.exists() {
        return Err(Error::Config(format!("states file {} does not exist", states_path.display())));
    }
    let states = read_numeric_csv(states_path)?;
    let dir = output_dir(&cfg, args)?;
    let final_delta = cfg.schedule_for(None)?.final_delta();
    let mut summary = Vec::new();
    for (i, s) in states.iter().enumerate() {
        match &rollout {
            RolloutConfig::Car {
                car,
                target_radius,
                dt,
                t_max,
                fd_delta,
            } => {
                let [x, y, w] = s[..] else {
                    return Err(Error::DimensionMismatch { expected: 3, got: s.len() });
                };
                let s0 = CarState::new(x, y, w);
                let horizon = t_max.unwrap_or(3.0 * s0.distance() / car.sigma.max(f64::MIN_POSITIVE));
                let settings = RolloutSettings::new(horizon, fd_delta.unwrap_or(final_delta)).with_dt(*dt);
                let traj = rollout_car(&net, car, s0, &settings, *target_radius)?;
                let mut out = CsvOut::create(
                    &dir.join(format!("trajectory_{i}.csv")),
                    "rollout",
                    &cfg,
                    None,
                    &["t", "x", "y", "omega", "a", "b", "distance"],
                )?;
                for st in &traj.steps {
                    out.row(&[st.t, st.state.x, st.state.y, st.state.omega, st.a, st.b, st.distance])?;
                }
                out.finish()?;
                let outcome = match traj.outcome {
                    CarOutcome::ReachedTarget(t) => format!("reached_target {t}"),
                    CarOutcome::Timeout => "timeout".into(),
                };
                println!("state {i}: {outcome}");
                summary.push(json!({"state": s, "outcome": traj.outcome}));
            }
            RolloutConfig::Game {
                evader,
                pursuer,
                arena,
                dt,
                t_max,
                fd_delta,
            } => {
                let [x, y, we, wp] = s[..] else {
                    return Err(Error::DimensionMismatch { expected: 4, got: s.len() });
                };
                let settings = RolloutSettings::new(*t_max, fd_delta.unwrap_or(final_delta)).with_dt(*dt);
                let traj = rollout_game(&net, evader, pursuer, GameState::new(x, y, we, wp), &settings, arena)?;
                let mut out = CsvOut::create(
                    &dir.join(format!("trajectory_{i}.csv")),
                    "rollout",
                    &cfg,
                    None,
                    &["t", "x", "y", "omega_e", "omega_p", "a_e", "b_e", "a_p", "b_p", "distance"],
                )?;
                for st in &traj.steps {
                    let c = st.controls;
                    out.row(&[st.t, st.state.x, st.state.y, st.state.omega_e, st.state.omega_p, c.a_e, c.b_e, c.a_p, c.b_p, st.distance])?;
                }
                out.finish()?;
                let outcome = match traj.outcome {
                    GameOutcome::Captured(t) => format!("captured {t}"),
                    GameOutcome::Escaped(t) => format!("escaped {t}"),
                    GameOutcome::Timeout => "timeout".into(),
                };
                println!("state {i}: {outcome}");
                summary.push(json!({"state": s, "outcome": traj.outcome}));
            }
        }
    }
    write_json(&dir.join("rollouts.json"), &json!({"config": cfg, "rollouts": summary}))
}

/// One `(α, δ)` row of a success-rate table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub delta: f64,
    pub rate: SuccessRate,
}

/// Trains one single-stage run per seed and `(α, δ)` pair and scores the
/// sign of every run against the ground truth.
pub fn run_sweep(cfg: &ExperimentConfig, seeds: &[u64], jobs: usize) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep.clone().ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let truth = cfg.ground_truth()?.ok_or_else(|| Error::Config("sweep needs a ground_truth".into()))?;
    let problem = cfg.build_problem()?;
    let base = cfg.schedule_for(Some(sweep.iterations))?.stages()[0].sgd;
    let domain = &cfg.problem.domain;
    let mut rows = Vec::new();
    for &alpha in &sweep.alphas {
        for &delta in &sweep.deltas {
            let outcomes = run_replicas(seeds, jobs, |&seed| -> Result<bool> {
                let mut net = Network::init(cfg.network.clone(), seed)?;
                let mut samplers = cfg.samplers(seed)?;
                let schedule = Schedule::new(vec![Stage::new(alpha, delta, base)])?;
                train_schedule_with(&mut net, &problem, &schedule, &cfg.weights, &mut samplers, |_, _| {})?;
                if is_success(&net, &truth, domain, &sweep.criterion)? {
                    return Ok(true);
                }
                if sweep.retry_iterations == 0 {
                    return Ok(false);
                }
                let retry = SgdConfig {
                    iterations: sweep.retry_iterations,
                    ..base
                };
                let schedule = Schedule::new(vec![Stage::new(alpha, delta, retry)])?;
                train_schedule_with(&mut net, &problem, &schedule, &cfg.weights, &mut samplers, |_, _| {})?;
                is_success(&net, &truth, domain, &sweep.criterion)
            });
            let mut ok = 0;
            for o in outcomes {
                ok += usize::from(o?);
            }
            rows.push(SweepRow {
                alpha,
                delta,
                rate: SuccessRate::from_counts(ok, seeds.len())?,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = output_dir(&cfg, args)?;
    let seeds = seeds(&cfg, args);
    let rows = run_sweep(&cfg, &seeds, args.jobs)?;
    let mut out = CsvOut::create(
        &dir.join("sweep.csv"),
        "sweep",
        &cfg,
        None,
        &["alpha", "delta", "runs", "successes", "success_rate", "half_width"],
    )?;
    for r in &rows {
        out.row(&[r.alpha, r.delta, r.rate.runs as f64, r.rate.successes as f64, r.rate.rate, r.rate.half_width])?;
        println!("alpha {} delta {}: {}/{} ({:.2} ± {:.2})", r.alpha, r.delta, r.rate.successes, r.rate.runs, r.rate.rate, r.rate.half_width);
    }
    out.finish()?;
    write_json(&dir.join("sweep.json"), &json!({"config": cfg, "seeds": seeds, "rows": rows}))
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// `1` for numerical failures, `2` for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        1
    } else {
        2
    }
}
