//! Accuracy metrics against a ground truth, sign-based success rates and
//! residual fields on evaluation lattices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{uniform_interior, Domain};
use crate::grid_oracle::GroundTruth;
use crate::hamiltonian::Hamiltonian;
use crate::scheme::{residual, ScalarField, SchemeConfig};

/// Default Monte-Carlo sample count for metrics.
pub const DEFAULT_EVAL_SAMPLES: usize = 100_000;

/// Largest evaluation lattice accepted by [`residual_field`].
pub const MAX_LATTICE_NODES: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub linf: f64,
    pub n_samples: usize,
    pub include_origin: bool,
    pub seed: u64,
}

fn accumulate(
    field: &(impl ScalarField + ?Sized),
    truth: &(impl ScalarField + ?Sized),
    points: impl Iterator<Item = Vec<f64>>,
) -> (f64, f64, usize) {
    let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0);
    for x in points {
        let e = field.value(&x) - truth.value(&x);
        sum += e * e;
        max = max.max(e.abs());
        n += 1;
    }
    (sum, max, n)
}

/// Monte-Carlo MSE and sup error over `n` uniform interior samples.
///
/// With `include_origin`, the origin enters the sup error (not the mean)
/// when the domain contains it; annular domains never include it.
pub fn mse_linf(
    field: &(impl ScalarField + ?Sized),
    truth: &(impl ScalarField + ?Sized),
    domain: &Domain,
    n: usize,
    include_origin: bool,
    seed: u64,
) -> Result<MetricReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("metric sample count must be >= 1".into()));
    }
    domain.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sum, mut linf, _) = accumulate(field, truth, (0..n).map(|_| uniform_interior(domain, &mut rng)));
    let include_origin = include_origin && !domain.is_annular() && domain.contains_origin();
    if include_origin {
        let origin = vec![0.0; domain.dim()];
        linf = linf.max((field.value(&origin) - truth.value(&origin)).abs());
    }
    Ok(MetricReport {
        mse: sum / n as f64,
        linf,
        n_samples: n,
        include_origin,
        seed,
    })
}

/// Metrics over `Ω × [0, T)` for a field with inputs `(x, t)`.
pub fn mse_linf_spacetime(
    field: &(impl ScalarField + ?Sized),
    truth: &(impl ScalarField + ?Sized),
    domain: &Domain,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<MetricReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("metric sample count must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    domain.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| {
        let mut x = uniform_interior(domain, &mut rng);
        x.push(horizon * rng.random::<f64>());
        x
    });
    let (sum, linf, _) = accumulate(field, truth, points);
    Ok(MetricReport {
        mse: sum / n as f64,
        linf,
        n_samples: n,
        include_origin: false,
        seed,
    })
}

/// A run succeeds when the field and the reference agree in sign on at
/// least `threshold` of `n_probes` uniform interior points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignCriterion {
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Probes closer than this to the boundary are redrawn, so a thin
    /// boundary layer of either sign does not count against a run.
    #[serde(default)]
    pub interior_margin: f64,
}

fn default_probes() -> usize {
    1000
}

fn default_threshold() -> f64 {
    0.99
}

impl Default for SignCriterion {
    fn default() -> Self {
        Self {
            n_probes: default_probes(),
            threshold: default_threshold(),
            seed: 0,
            interior_margin: 0.0,
        }
    }
}

/// Fraction of probes where `sign(field) == sign(reference)`.
pub fn sign_agreement(
    field: &(impl ScalarField + ?Sized),
    reference: &(impl ScalarField + ?Sized),
    domain: &Domain,
    criterion: &SignCriterion,
) -> Result<f64> {
    if criterion.n_probes == 0 {
        return Err(Error::InvalidArgument("n_probes must be >= 1".into()));
    }
    if !(criterion.interior_margin >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interior_margin must be >= 0, got {}",
            criterion.interior_margin
        )));
    }
    let depth = if criterion.interior_margin > 0.0 {
        Some(GroundTruth::distance_to_boundary(domain.base())?)
    } else {
        None
    };
    let spatial = domain.spatial_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(criterion.seed);
    let mut hits = 0usize;
    for _ in 0..criterion.n_probes {
        let mut x = uniform_interior(domain, &mut rng);
        if let Some(depth) = &depth {
            let mut tries = 0;
            while depth.value(&x[..spatial]) < criterion.interior_margin {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::InvalidArgument("interior_margin leaves no room for probes".into()));
                }
                x = uniform_interior(domain, &mut rng);
            }
        }
        let (a, b) = (field.value(&x), reference.value(&x));
        if a.signum() == b.signum() && a != 0.0 && b != 0.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / criterion.n_probes as f64)
}

pub fn is_success(
    field: &(impl ScalarField + ?Sized),
    reference: &(impl ScalarField + ?Sized),
    domain: &Domain,
    criterion: &SignCriterion,
) -> Result<bool> {
    Ok(sign_agreement(field, reference, domain, criterion)? >= criterion.threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub successes: usize,
    pub runs: usize,
    pub rate: f64,
    /// Normal-approximation 95% half-width `1.96·√(p(1−p)/runs)`.
    pub half_width: f64,
}

impl SuccessRate {
    pub fn from_counts(successes: usize, runs: usize) -> Result<Self> {
        if runs == 0 || successes > runs {
            return Err(Error::InvalidArgument(format!("{successes} successes out of {runs} runs")));
        }
        let p = successes as f64 / runs as f64;
        Ok(Self {
            successes,
            runs,
            rate: p,
            half_width: 1.96 * (p * (1.0 - p) / runs as f64).sqrt(),
        })
    }
}

/// Success rate of a set of trained fields against one reference.
pub fn success_rate<F: ScalarField>(
    runs: &[F],
    reference: &(impl ScalarField + ?Sized),
    domain: &Domain,
    criterion: &SignCriterion,
) -> Result<SuccessRate> {
    let mut ok = 0;
    for f in runs {
        if is_success(f, reference, domain, criterion)? {
            ok += 1;
        }
    }
    SuccessRate::from_counts(ok, runs.len())
}

/// Squared residuals on a lattice of cell centres.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

/// Cell centres of a `resolution^d` lattice over the bounding box, kept when
/// strictly inside the domain.
pub fn evaluation_lattice(domain: &Domain, resolution: usize) -> Result<Vec<Vec<f64>>> {
    domain.validate()?;
    let d = domain.dim();
    let total = (resolution as f64).powi(d as i32);
    if resolution == 0 || total > MAX_LATTICE_NODES as f64 {
        return Err(Error::InvalidArgument(format!(
            "lattice resolution {resolution} in dimension {d} is out of range"
        )));
    }
    let (lo, hi) = domain.bounding_box();
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|i| lo[i] + (idx[i] as f64 + 0.5) * (hi[i] - lo[i]) / resolution as f64)
            .collect();
        if domain.contains(&x) {
            points.push(x);
        }
        let mut i = 0;
        loop {
            if i == d {
                return Ok(points);
            }
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// `[Ĥ_α(x, D⁺Φ, D⁻Φ)]²` over [`evaluation_lattice`], with its mean and max.
pub fn residual_field(
    field: &(impl ScalarField + ?Sized),
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    domain: &Domain,
    resolution: usize,
) -> Result<ResidualField> {
    cfg.validate()?;
    let points = evaluation_lattice(domain, resolution)?;
    if points.is_empty() {
        return Err(Error::InvalidArgument("evaluation lattice has no interior nodes".into()));
    }
    let mut values = Vec::with_capacity(points.len());
    for x in &points {
        let r = residual(h, cfg, field, x)?;
        values.push(r * r);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(ResidualField {
        points,
        values,
        mean,
        max,
    })
}

/// A planar slice: every coordinate fixed except `axes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSection {
    pub axes: (usize, usize),
    /// Values of all coordinates; the two free ones are ignored.
    pub fixed: Vec<f64>,
    pub resolution: usize,
}

impl CrossSection {
    pub fn plane(dim: usize, resolution: usize) -> Self {
        Self {
            axes: (0, 1),
            fixed: vec![0.0; dim],
            resolution,
        }
    }
}

/// `(a, b, f(x))` rows on the cross-section, skipping points outside the
/// domain.
pub fn cross_section_rows(
    domain: &Domain,
    section: &CrossSection,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<(f64, f64, f64)>> {
    let d = domain.dim();
    let (i, j) = section.axes;
    if section.fixed.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: section.fixed.len(),
        });
    }
    if i >= d || j >= d || i == j || section.resolution == 0 {
        return Err(Error::InvalidArgument(format!("bad cross-section axes {:?}", section.axes)));
    }
    let (lo, hi) = domain.bounding_box();
    let n = section.resolution as f64;
    let mut rows = Vec::new();
    let mut x = section.fixed.clone();
    for a in 0..section.resolution {
        for b in 0..section.resolution {
            x[i] = lo[i] + (a as f64 + 0.5) * (hi[i] - lo[i]) / n;
            x[j] = lo[j] + (b as f64 + 0.5) * (hi[j] - lo[j]) / n;
            if domain.contains(&x) {
                rows.push((x[i], x[j], f(&x)?));
            }
        }
    }
    Ok(rows)
}

/// Squared residual on a cross-section.
pub fn residual_cross_section(
    field: &(impl ScalarField + ?Sized),
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    domain: &Domain,
    section: &CrossSection,
) -> Result<Vec<(f64, f64, f64)>> {
    cross_section_rows(domain, section, |x| Ok(residual(h, cfg, field, x)?.powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_oracle::GroundTruth;

    #[test]
    fn constant_offset_metrics() {
        let domain = Domain::cube(2, 1.0);
        let truth = GroundTruth::distance_to_boundary(&domain).unwrap();
        let shifted = |x: &[f64]| truth.value(x) + 0.1;
        let r = mse_linf(&shifted, &truth, &domain, 500, true, 3).unwrap();
        assert!((r.mse - 0.01).abs() < 1e-14);
        assert!((r.linf - 0.1).abs() < 1e-14);
        assert!(r.include_origin);
        let exact = mse_linf(&truth, &truth, &domain, 50, true, 3).unwrap();
        assert_eq!((exact.mse, exact.linf), (0.0, 0.0));
    }

    #[test]
    fn annulus_never_includes_origin() {
        let domain = Domain::annulus(2, 0.5, 1.0);
        let zero = |_: &[f64]| 0.0;
        assert!(!mse_linf(&zero, &zero, &domain, 10, true, 0).unwrap().include_origin);
    }

    #[test]
    fn sign_success_extremes() {
        let domain = Domain::ball(2, 1.0);
        let truth = GroundTruth::distance_to_boundary(&domain).unwrap();
        let neg = |x: &[f64]| -truth.value(x);
        let c = SignCriterion::default();
        assert_eq!(success_rate(&[truth.clone(), truth.clone()], &truth, &domain, &c).unwrap().rate, 1.0);
        assert_eq!(success_rate(&[neg], &truth, &domain, &c).unwrap().rate, 0.0);
    }

    #[test]
    fn residual_mean_below_max() {
        let domain = Domain::cube(2, 1.0);
        let f = |x: &[f64]| x[0] * x[0] - x[1];
        let field = residual_field(&f, &Hamiltonian::EikonalSquared, &SchemeConfig::new(1.0, 0.1), &domain, 20).unwrap();
        assert_eq!(field.points.len(), 400);
        assert!(field.mean <= field.max);
    }
}
