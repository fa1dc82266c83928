//! Domains and the samplers that draw collocation, boundary and
//! supervised points from them.
//!
//! Every sampler is a value-semantic generator seeded from a 64-bit seed.
//! Independent workers get independent streams through
//! [`Sampler::for_worker`], which keeps the seed and selects a distinct
//! ChaCha stream per worker id.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded open domain, optionally extended by 2π-periodic coordinates.
///
/// Periodic coordinates always come last: a point of
/// `ProductWithTorus { base, torus_dims: k }` is `(base point, ω_1, …, ω_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Cube {
        center: Vec<f64>,
        half_width: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        inner_radius: f64,
        outer_radius: f64,
    },
    ProductWithTorus {
        base: Box<Domain>,
        torus_dims: usize,
    },
}

/// Which part of the boundary a boundary sample lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// Cube face `2i` is `x_i = c_i − h`, face `2i + 1` is `x_i = c_i + h`.
    Face(usize),
    Sphere,
    Inner,
    Outer,
}

impl Domain {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Domain::Cube {
            center: vec![0.0; dim],
            half_width,
        }
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Domain::Ball {
            center: vec![0.0; dim],
            radius,
        }
    }

    pub fn annulus(dim: usize, inner_radius: f64, outer_radius: f64) -> Self {
        Domain::Annulus {
            center: vec![0.0; dim],
            inner_radius,
            outer_radius,
        }
    }

    pub fn with_torus(self, torus_dims: usize) -> Self {
        Domain::ProductWithTorus {
            base: Box::new(self),
            torus_dims,
        }
    }

    /// Checks the shape invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDomain(msg));
        match self {
            Domain::Cube { center, half_width } => {
                if center.is_empty() {
                    return bad("cube needs at least one dimension".into());
                }
                if !(*half_width > 0.0) || !half_width.is_finite() {
                    return bad(format!("cube half_width must be > 0, got {half_width}"));
                }
            }
            Domain::Ball { center, radius } => {
                if center.is_empty() {
                    return bad("ball needs at least one dimension".into());
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return bad(format!("ball radius must be > 0, got {radius}"));
                }
            }
            Domain::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                if center.is_empty() {
                    return bad("annulus needs at least one dimension".into());
                }
                if !(0.0 < *inner_radius && inner_radius < outer_radius) || !outer_radius.is_finite() {
                    return bad(format!(
                        "annulus needs 0 < r < R, got r = {inner_radius}, R = {outer_radius}"
                    ));
                }
            }
            Domain::ProductWithTorus { base, torus_dims } => {
                if matches!(**base, Domain::ProductWithTorus { .. }) {
                    return bad("torus product base must be non-periodic".into());
                }
                if *torus_dims == 0 {
                    return bad("torus product needs at least one periodic coordinate".into());
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Total dimension, periodic coordinates included.
    pub fn dim(&self) -> usize {
        match self {
            Domain::Cube { center, .. } | Domain::Ball { center, .. } | Domain::Annulus { center, .. } => {
                center.len()
            }
            Domain::ProductWithTorus { base, torus_dims } => base.dim() + torus_dims,
        }
    }

    /// Dimension of the non-periodic part.
    pub fn spatial_dim(&self) -> usize {
        match self {
            Domain::ProductWithTorus { base, .. } => base.dim(),
            _ => self.dim(),
        }
    }

    pub fn torus_dims(&self) -> usize {
        match self {
            Domain::ProductWithTorus { torus_dims, .. } => *torus_dims,
            _ => 0,
        }
    }

    pub fn base(&self) -> &Domain {
        match self {
            Domain::ProductWithTorus { base, .. } => base,
            _ => self,
        }
    }

    fn center(&self) -> &[f64] {
        match self {
            Domain::Cube { center, .. } | Domain::Ball { center, .. } | Domain::Annulus { center, .. } => {
                center
            }
            Domain::ProductWithTorus { base, .. } => base.center(),
        }
    }

    /// Strict interior membership. Periodic coordinates are unconstrained.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Cube { center, half_width } => sup_dist(x, center) < *half_width,
            Domain::Ball { center, radius } => euclid_dist(x, center) < *radius,
            Domain::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = euclid_dist(x, center);
                *inner_radius < r && r < *outer_radius
            }
            Domain::ProductWithTorus { base, .. } => base.contains(&x[..base.dim()]),
        }
    }

    /// True when `x` lies within `tol` of the (non-periodic) boundary.
    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Cube { center, half_width } => (sup_dist(x, center) - half_width).abs() <= tol,
            Domain::Ball { center, radius } => (euclid_dist(x, center) - radius).abs() <= tol,
            Domain::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = euclid_dist(x, center);
                (r - inner_radius).abs() <= tol || (r - outer_radius).abs() <= tol
            }
            Domain::ProductWithTorus { base, .. } => base.on_boundary(&x[..base.dim()], tol),
        }
    }

    /// Residual of the boundary equation selected by `tag`; zero on that
    /// boundary piece.
    pub fn boundary_residual(&self, x: &[f64], tag: BoundaryTag) -> f64 {
        match (self, tag) {
            (Domain::Cube { center, half_width }, BoundaryTag::Face(k)) => {
                let i = k / 2;
                let target = if k % 2 == 0 {
                    center[i] - half_width
                } else {
                    center[i] + half_width
                };
                x[i] - target
            }
            (Domain::Ball { center, radius }, BoundaryTag::Sphere) => euclid_dist(x, center) - radius,
            (Domain::Annulus { center, inner_radius, .. }, BoundaryTag::Inner) => {
                euclid_dist(x, center) - inner_radius
            }
            (Domain::Annulus { center, outer_radius, .. }, BoundaryTag::Outer) => {
                euclid_dist(x, center) - outer_radius
            }
            (Domain::ProductWithTorus { base, .. }, tag) => {
                base.boundary_residual(&x[..base.dim()], tag)
            }
            _ => f64::NAN,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`; periodic coordinates span `[0, 2π)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Cube { center, half_width } => (
                center.iter().map(|c| c - half_width).collect(),
                center.iter().map(|c| c + half_width).collect(),
            ),
            Domain::Ball { center, radius: r }
            | Domain::Annulus {
                center,
                outer_radius: r,
                ..
            } => (
                center.iter().map(|c| c - r).collect(),
                center.iter().map(|c| c + r).collect(),
            ),
            Domain::ProductWithTorus { base, torus_dims } => {
                let (mut lo, mut hi) = base.bounding_box();
                lo.extend(std::iter::repeat_n(0.0, *torus_dims));
                hi.extend(std::iter::repeat_n(TAU, *torus_dims));
                (lo, hi)
            }
        }
    }

    /// True when the origin (of the non-periodic part) lies inside.
    pub fn contains_origin(&self) -> bool {
        let base = self.base();
        let zero = vec![0.0; base.dim()];
        base.contains(&zero)
    }

    pub fn is_annular(&self) -> bool {
        matches!(self.base(), Domain::Annulus { .. })
    }
}

fn sup_dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn euclid_dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// The distribution a sampler draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerKind {
    UniformInterior,
    /// `x = c + r·v` with `r` uniform on the radial interval and `v`
    /// uniform on the unit sphere. Ball and annulus only.
    RadiallyUniform,
    UniformBoundary,
    /// Deterministic lattice `c + shift + δℤ^d` restricted to the domain.
    GridNodes {
        delta: f64,
        #[serde(default)]
        shift: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(flatten)]
    pub kind: SamplerKind,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn uniform_interior(seed: u64) -> Self {
        Self::new(SamplerKind::UniformInterior, seed)
    }

    pub fn radially_uniform(seed: u64) -> Self {
        Self::new(SamplerKind::RadiallyUniform, seed)
    }

    pub fn uniform_boundary(seed: u64) -> Self {
        Self::new(SamplerKind::UniformBoundary, seed)
    }
}

/// A seeded point generator bound to one domain.
#[derive(Clone, Debug)]
pub struct Sampler {
    domain: Domain,
    kind: SamplerKind,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(domain: &Domain, spec: &SamplerSpec) -> Result<Self> {
        Self::for_worker(domain, spec, 0)
    }

    /// Independent stream `worker_id` for the same seed.
    pub fn for_worker(domain: &Domain, spec: &SamplerSpec, worker_id: u64) -> Result<Self> {
        domain.validate()?;
        check_spec(domain, &spec.kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(worker_id);
        Ok(Self {
            domain: domain.clone(),
            kind: spec.kind.clone(),
            rng,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Draws `n` interior points (the lattice sampler returns at most `n`).
    pub fn interior(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        match &self.kind {
            SamplerKind::UniformInterior => Ok((0..n)
                .map(|_| uniform_interior(&self.domain, &mut self.rng))
                .collect()),
            SamplerKind::RadiallyUniform => Ok((0..n)
                .map(|_| radially_uniform(&self.domain, &mut self.rng))
                .collect()),
            SamplerKind::GridNodes { delta, shift } => lattice_points(&self.domain, *delta, shift, n),
            SamplerKind::UniformBoundary => Err(Error::InvalidSampler(
                "uniform_boundary cannot draw interior points".into(),
            )),
        }
    }

    /// Draws `n` boundary points with the tag of the boundary piece each lies on.
    pub fn boundary(&mut self, n: usize) -> Result<Vec<(Vec<f64>, BoundaryTag)>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        match &self.kind {
            SamplerKind::UniformBoundary => Ok((0..n)
                .map(|_| uniform_boundary(&self.domain, &mut self.rng))
                .collect()),
            other => Err(Error::InvalidSampler(format!(
                "{other:?} cannot draw boundary points"
            ))),
        }
    }

    /// Access to the underlying stream for auxiliary draws.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn check_spec(domain: &Domain, kind: &SamplerKind) -> Result<()> {
    match kind {
        SamplerKind::RadiallyUniform => match domain.base() {
            Domain::Ball { .. } | Domain::Annulus { .. } => Ok(()),
            _ => Err(Error::InvalidSampler(
                "radially uniform sampling needs a ball or annulus".into(),
            )),
        },
        SamplerKind::GridNodes { delta, shift } => {
            if !(*delta > 0.0) {
                return Err(Error::InvalidSampler(format!("grid delta must be > 0, got {delta}")));
            }
            if !shift.is_empty() && shift.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: shift.len(),
                });
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// One-shot interior draw with a fresh stream seeded from `spec.seed`.
pub fn sample_interior(domain: &Domain, spec: &SamplerSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    Sampler::new(domain, spec)?.interior(n)
}

/// One-shot boundary draw with a fresh stream seeded from `spec.seed`.
pub fn sample_boundary(
    domain: &Domain,
    spec: &SamplerSpec,
    n: usize,
) -> Result<Vec<(Vec<f64>, BoundaryTag)>> {
    Sampler::new(domain, spec)?.boundary(n)
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn push_angles<R: Rng + ?Sized>(p: &mut Vec<f64>, k: usize, rng: &mut R) {
    p.extend((0..k).map(|_| TAU * rng.random::<f64>()));
}

/// Uniform (Lebesgue) draw from the interior.
pub fn uniform_interior<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Vec<f64> {
    match domain {
        Domain::Cube { center, half_width } => loop {
            let p: Vec<f64> = center
                .iter()
                .map(|c| c + half_width * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            if domain.contains(&p) {
                return p;
            }
        },
        Domain::Ball { center, radius } => {
            let d = center.len() as f64;
            let v = unit_vector(center.len(), rng);
            let r = radius * rng.random::<f64>().powf(1.0 / d);
            center.iter().zip(v).map(|(c, vi)| c + r * vi).collect()
        }
        Domain::Annulus {
            center,
            outer_radius,
            ..
        } => {
            // rejection from the bounding ball
            let ball = Domain::Ball {
                center: center.clone(),
                radius: *outer_radius,
            };
            loop {
                let p = uniform_interior(&ball, rng);
                if domain.contains(&p) {
                    return p;
                }
            }
        }
        Domain::ProductWithTorus { base, torus_dims } => {
            let mut p = uniform_interior(base, rng);
            push_angles(&mut p, *torus_dims, rng);
            p
        }
    }
}

/// Radially uniform draw from a ball or annulus (optionally times a torus).
///
/// Panics when the base domain is a cube; [`Sampler`] rejects that pairing
/// up front.
pub fn radially_uniform<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Vec<f64> {
    match domain {
        Domain::Ball { center, radius } => {
            let v = unit_vector(center.len(), rng);
            let r = radius * rng.random::<f64>();
            center.iter().zip(v).map(|(c, vi)| c + r * vi).collect()
        }
        Domain::Annulus {
            center,
            inner_radius,
            outer_radius,
        } => loop {
            let v = unit_vector(center.len(), rng);
            let r = inner_radius + (outer_radius - inner_radius) * rng.random::<f64>();
            let p: Vec<f64> = center.iter().zip(v).map(|(c, vi)| c + r * vi).collect();
            if domain.contains(&p) {
                return p;
            }
        },
        Domain::ProductWithTorus { base, torus_dims } => {
            let mut p = radially_uniform(base, rng);
            push_angles(&mut p, *torus_dims, rng);
            p
        }
        Domain::Cube { .. } => panic!("radially uniform sampling is undefined on a cube"),
    }
}

/// Uniform draw from the boundary.
///
/// Cubes pick one of the `2d` faces uniformly and then a uniform point on
/// it; annuli pick the inner or outer shell with probability 1/2 each.
pub fn uniform_boundary<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> (Vec<f64>, BoundaryTag) {
    match domain {
        Domain::Cube { center, half_width } => {
            let d = center.len();
            let face = rng.random_range(0..2 * d);
            let axis = face / 2;
            let p = center
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == axis {
                        if face % 2 == 0 {
                            c - half_width
                        } else {
                            c + half_width
                        }
                    } else {
                        c + half_width * (2.0 * rng.random::<f64>() - 1.0)
                    }
                })
                .collect();
            (p, BoundaryTag::Face(face))
        }
        Domain::Ball { center, radius } => {
            let v = unit_vector(center.len(), rng);
            (
                center.iter().zip(v).map(|(c, vi)| c + radius * vi).collect(),
                BoundaryTag::Sphere,
            )
        }
        Domain::Annulus {
            center,
            inner_radius,
            outer_radius,
        } => {
            let (r, tag) = if rng.random::<bool>() {
                (*inner_radius, BoundaryTag::Inner)
            } else {
                (*outer_radius, BoundaryTag::Outer)
            };
            let v = unit_vector(center.len(), rng);
            (center.iter().zip(v).map(|(c, vi)| c + r * vi).collect(), tag)
        }
        Domain::ProductWithTorus { base, torus_dims } => {
            let (mut p, tag) = uniform_boundary(base, rng);
            push_angles(&mut p, *torus_dims, rng);
            (p, tag)
        }
    }
}

/// Lattice nodes `c + shift + δk` inside the domain, in lexicographic
/// order (last coordinate fastest), truncated to `limit` nodes. Periodic
/// coordinates run over `[0, 2π)` with the same spacing.
pub fn lattice_points(domain: &Domain, delta: f64, shift: &[f64], limit: usize) -> Result<Vec<Vec<f64>>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidSampler(format!("grid delta must be > 0, got {delta}")));
    }
    let dim = domain.dim();
    let spatial = domain.spatial_dim();
    let shift: Vec<f64> = if shift.is_empty() {
        vec![0.0; dim]
    } else {
        shift.to_vec()
    };
    let (lo, hi) = domain.bounding_box();
    let center = domain.center();
    let origin: Vec<f64> = (0..dim)
        .map(|i| if i < spatial { center[i] } else { 0.0 } + shift[i])
        .collect();
    let ranges: Vec<(i64, i64)> = (0..dim)
        .map(|i| {
            let a = ((lo[i] - origin[i]) / delta).ceil() as i64;
            let mut b = ((hi[i] - origin[i]) / delta).floor() as i64;
            if i >= spatial && origin[i] + b as f64 * delta >= TAU {
                b -= 1;
            }
            (a, b)
        })
        .collect();
    let mut out = Vec::new();
    if ranges.iter().any(|(a, b)| a > b) {
        return Ok(out);
    }
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        let p: Vec<f64> = (0..dim).map(|i| origin[i] + idx[i] as f64 * delta).collect();
        if domain.contains(&p) {
            out.push(p);
            if out.len() >= limit {
                break;
            }
        }
        let mut k = dim;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
    Ok(out)
}

/// Largest nearest-neighbour distance over the point set.
///
/// Used as a lower bound for the stencil width δ: with δ above this value
/// every stencil reaches past the sample's own neighbourhood.
pub fn nearest_neighbor_delta(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, q) in points.iter().enumerate() {
            if i != j {
                best = best.min(euclid_dist(p, q));
            }
        }
        worst = worst.max(best);
    }
    Ok(worst)
}
