//! Neural-network function classes with exact reverse-mode parameter
//! gradients: plain ReLU multilayer perceptrons and 2π-periodic
//! trigonometric combinations of MLP blocks.
//!
//! Parameters live in one flat vector. Each MLP layer stores its weight
//! matrix row-major (`fan_out × fan_in`) followed by its bias vector.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::ScalarField;

const MAGIC: &[u8; 4] = b"HJNN";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Fully connected ReLU network `ℝ^input_dim → ℝ` with the given hidden widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

/// Location and shape of one affine layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "hidden widths must be a non-empty list of positive integers, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    /// Index map of every affine layer, output layer last.
    pub fn layers(&self) -> Vec<LayerSlot> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend(&self.hidden);
        widths.push(1);
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.fan_out)
            .sum()
    }
}

/// One angle coordinate expanded in a truncated Fourier series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGroup {
    /// Position of the angle in the full input vector.
    pub angle_index: usize,
    pub max_frequency: usize,
}

/// `Φ(x, ω) = Σ_g [Σ_{n=0}^{n_g} φ(x; θ_{g,n}^c) cos(n ω_g) + Σ_{m=1}^{n_g} φ(x; θ_{g,m}^s) sin(m ω_g)]`
/// where `x` are the leading `spatial_dim` coordinates and every `φ` is an
/// independent copy of the base MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicArchitecture {
    pub spatial_dim: usize,
    pub groups: Vec<AngleGroup>,
    /// Hidden widths of every block; its input dimension is `spatial_dim`.
    pub base: MlpArchitecture,
}

/// One `(group, frequency, cos|sin)` term of a periodic network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Term {
    pub angle_index: usize,
    pub frequency: usize,
    pub sine: bool,
}

impl PeriodicArchitecture {
    pub fn new(spatial_dim: usize, groups: Vec<AngleGroup>, hidden: Vec<usize>) -> Self {
        Self {
            spatial_dim,
            groups,
            base: MlpArchitecture::new(spatial_dim, hidden),
        }
    }

    /// Angles at indices `spatial_dim..spatial_dim + k`, all with the same
    /// maximal frequency.
    pub fn trailing_angles(spatial_dim: usize, angles: usize, max_frequency: usize, hidden: Vec<usize>) -> Self {
        let groups = (0..angles)
            .map(|k| AngleGroup {
                angle_index: spatial_dim + k,
                max_frequency,
            })
            .collect();
        Self::new(spatial_dim, groups, hidden)
    }

    pub fn input_dim(&self) -> usize {
        self.spatial_dim + self.groups.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.input_dim != self.spatial_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spatial_dim,
                got: self.base.input_dim,
            });
        }
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument("periodic network needs at least one angle group".into()));
        }
        let dim = self.input_dim();
        let mut seen = vec![false; dim];
        for g in &self.groups {
            if g.angle_index < self.spatial_dim || g.angle_index >= dim || seen[g.angle_index] {
                return Err(Error::InvalidArgument(format!(
                    "angle index {} must be distinct and in {}..{}",
                    g.angle_index, self.spatial_dim, dim
                )));
            }
            seen[g.angle_index] = true;
        }
        Ok(())
    }

    /// Terms in parameter-block order.
    pub fn terms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        for g in &self.groups {
            for n in 0..=g.max_frequency {
                out.push(Term {
                    angle_index: g.angle_index,
                    frequency: n,
                    sine: false,
                });
            }
            for m in 1..=g.max_frequency {
                out.push(Term {
                    angle_index: g.angle_index,
                    frequency: m,
                    sine: true,
                });
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.terms().len() * self.base.num_params()
    }
}

impl Term {
    fn weight(&self, x: &[f64]) -> f64 {
        let arg = self.frequency as f64 * x[self.angle_index];
        if self.sine {
            arg.sin()
        } else {
            arg.cos()
        }
    }
}

/// Architecture descriptor stored with every parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpArchitecture),
    Periodic(PeriodicArchitecture),
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Mlp(a) => a.validate(),
            Architecture::Periodic(a) => a.validate(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp(a) => a.input_dim,
            Architecture::Periodic(a) => a.input_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Architecture::Mlp(a) => a.num_params(),
            Architecture::Periodic(a) => a.num_params(),
        }
    }
}

impl From<MlpArchitecture> for Architecture {
    fn from(a: MlpArchitecture) -> Self {
        Architecture::Mlp(a)
    }
}

impl From<PeriodicArchitecture> for Architecture {
    fn from(a: PeriodicArchitecture) -> Self {
        Architecture::Periodic(a)
    }
}

/// Post-activation values of every layer for one input, kept for the
/// backward pass.
struct Tape {
    acts: Vec<Vec<f64>>,
}

fn mlp_forward(layers: &[LayerSlot], theta: &[f64], x: &[f64], tape: Option<&mut Tape>) -> f64 {
    let mut cur: Vec<f64> = x.to_vec();
    let mut saved = Vec::new();
    let record = tape.is_some();
    let last = layers.len() - 1;
    let mut out = 0.0;
    for (k, l) in layers.iter().enumerate() {
        let w = &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out];
        let b = &theta[l.bias_offset..l.bias_offset + l.fan_out];
        let mut next = Vec::with_capacity(l.fan_out);
        for (row, bias) in w.chunks_exact(l.fan_in).zip(b) {
            let z = row.iter().zip(&cur).map(|(a, v)| a * v).sum::<f64>() + bias;
            next.push(if k == last { z } else { z.max(0.0) });
        }
        if k == last {
            out = next[0];
        }
        let prev = std::mem::replace(&mut cur, next);
        if record {
            saved.push(prev);
        }
    }
    if let Some(t) = tape {
        t.acts = saved;
    }
    out
}

/// Adds `upstream · ∇_θ Φ(x)` to `grad`, with `σ'(0) = 0`.
fn mlp_backward(layers: &[LayerSlot], theta: &[f64], tape: &Tape, upstream: f64, grad: &mut [f64]) {
    let mut delta = vec![upstream];
    for (k, l) in layers.iter().enumerate().rev() {
        let input = &tape.acts[k];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = l.weight_offset + o * l.fan_in;
            for (g, v) in grad[row..row + l.fan_in].iter_mut().zip(input) {
                *g += d * v;
            }
            grad[l.bias_offset + o] += d;
        }
        if k == 0 {
            break;
        }
        let w = &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out];
        let mut prev = vec![0.0; l.fan_in];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for (p, a) in prev.iter_mut().zip(&w[o * l.fan_in..(o + 1) * l.fan_in]) {
                *p += d * a;
            }
        }
        // input to layer k is the ReLU output of layer k-1
        for (p, v) in prev.iter_mut().zip(input) {
            if *v <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
}

fn mlp_min_preactivation(layers: &[LayerSlot], theta: &[f64], x: &[f64]) -> f64 {
    let mut cur: Vec<f64> = x.to_vec();
    let mut best = f64::INFINITY;
    let last = layers.len() - 1;
    for l in &layers[..last] {
        let w = &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out];
        let b = &theta[l.bias_offset..l.bias_offset + l.fan_out];
        cur = w
            .chunks_exact(l.fan_in)
            .zip(b)
            .map(|(row, bias)| {
                let z = row.iter().zip(&cur).map(|(a, v)| a * v).sum::<f64>() + bias;
                best = best.min(z.abs());
                z.max(0.0)
            })
            .collect();
    }
    best
}

fn mlp_lipschitz(layers: &[LayerSlot], theta: &[f64]) -> f64 {
    layers
        .iter()
        .map(|l| {
            let w = &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out];
            spectral_norm(w, l.fan_out, l.fan_in)
        })
        .product()
}

/// Largest singular value of a row-major `rows × cols` matrix.
pub fn spectral_norm(w: &[f64], rows: usize, cols: usize) -> f64 {
    let m = DMatrix::from_row_slice(rows, cols, w);
    m.singular_values().max()
}

fn init_mlp_block<R: Rng>(layers: &[LayerSlot], theta: &mut [f64], rng: &mut R) {
    for l in layers {
        let bound = (6.0 / l.fan_in as f64).sqrt();
        for v in &mut theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out] {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut theta[l.bias_offset..l.bias_offset + l.fan_out] {
            *v = 0.0;
        }
    }
}

/// A network architecture together with its parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    theta: Vec<f64>,
    layers: Vec<LayerSlot>,
    terms: Vec<Term>,
    block_len: usize,
}

impl Network {
    /// Fan-in scaled uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn init(arch: impl Into<Architecture>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if net.terms.is_empty() {
            init_mlp_block(&net.layers, &mut net.theta, &mut rng);
        } else {
            for block in net.theta.chunks_exact_mut(net.block_len) {
                init_mlp_block(&net.layers, block, &mut rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(arch: impl Into<Architecture>) -> Result<Self> {
        let arch = arch.into();
        let n = arch.num_params();
        Self::from_parts(arch, vec![0.0; n])
    }

    pub fn from_parts(arch: impl Into<Architecture>, theta: Vec<f64>) -> Result<Self> {
        let arch = arch.into();
        arch.validate()?;
        if theta.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.num_params(),
                got: theta.len(),
            });
        }
        let (layers, terms, block_len) = match &arch {
            Architecture::Mlp(a) => (a.layers(), Vec::new(), a.num_params()),
            Architecture::Periodic(a) => (a.base.layers(), a.terms(), a.base.num_params()),
        };
        Ok(Self {
            arch,
            theta,
            layers,
            terms,
            block_len,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn spatial_dim(&self) -> usize {
        match &self.arch {
            Architecture::Mlp(a) => a.input_dim,
            Architecture::Periodic(a) => a.spatial_dim,
        }
    }

    /// `Φ(x; θ)` with a dimension check.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// `Φ(x; θ)`; the caller guarantees `x.len() == input_dim()`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        if self.terms.is_empty() {
            return mlp_forward(&self.layers, &self.theta, x, None);
        }
        let spatial = &x[..self.spatial_dim()];
        self.terms
            .iter()
            .zip(self.theta.chunks_exact(self.block_len))
            .map(|(t, block)| {
                let wgt = t.weight(x);
                if wgt == 0.0 {
                    0.0
                } else {
                    wgt * mlp_forward(&self.layers, block, spatial, None)
                }
            })
            .sum()
    }

    /// Adds `upstream · ∇_θ Φ(x; θ)` to `grad`.
    pub fn accumulate_grad(&self, x: &[f64], upstream: f64, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.theta.len());
        if upstream == 0.0 {
            return;
        }
        let mut tape = Tape { acts: Vec::new() };
        if self.terms.is_empty() {
            mlp_forward(&self.layers, &self.theta, x, Some(&mut tape));
            mlp_backward(&self.layers, &self.theta, &tape, upstream, grad);
            return;
        }
        let spatial = &x[..self.spatial_dim()];
        for ((t, block), gblock) in self
            .terms
            .iter()
            .zip(self.theta.chunks_exact(self.block_len))
            .zip(grad.chunks_exact_mut(self.block_len))
        {
            let wgt = t.weight(x);
            if wgt == 0.0 {
                continue;
            }
            mlp_forward(&self.layers, block, spatial, Some(&mut tape));
            mlp_backward(&self.layers, block, &tape, upstream * wgt, gblock);
        }
    }

    /// `Σ_j upstream_j ∇_θ Φ(x_j; θ)`, summed in list order.
    pub fn grad_params(&self, adjoints: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.theta.len()];
        for (x, up) in adjoints {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
            self.accumulate_grad(x, *up, &mut grad);
        }
        Ok(grad)
    }

    /// Smallest `|pre-activation|` over all hidden units (and blocks) at `x`.
    /// Small values flag inputs next to a ReLU kink.
    pub fn min_abs_preactivation(&self, x: &[f64]) -> f64 {
        if self.terms.is_empty() {
            return mlp_min_preactivation(&self.layers, &self.theta, x);
        }
        let spatial = &x[..self.spatial_dim()];
        self.theta
            .chunks_exact(self.block_len)
            .map(|b| mlp_min_preactivation(&self.layers, b, spatial))
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the Lipschitz constant: product of layer spectral
    /// norms. For periodic networks this bounds the spatial Lipschitz
    /// constant at any fixed angle, as the sum over blocks.
    pub fn lipschitz_estimate(&self) -> f64 {
        if self.terms.is_empty() {
            return mlp_lipschitz(&self.layers, &self.theta);
        }
        self.theta
            .chunks_exact(self.block_len)
            .map(|b| mlp_lipschitz(&self.layers, b))
            .sum()
    }

    /// Serializes to the `HJNN` binary format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let desc = serde_json::to_vec(&self.arch)?;
        let mut out = Vec::with_capacity(12 + desc.len() + 8 * self.theta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        out.extend_from_slice(&desc);
        for v in &self.theta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidThetaFile(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing HJNN magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::InvalidThetaFile(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated descriptor"))?;
        let arch: Architecture = serde_json::from_slice(body)
            .map_err(|e| Error::InvalidThetaFile(format!("bad descriptor: {e}")))?;
        arch.validate()?;
        let rest = &bytes[12 + len..];
        if rest.len() != 8 * arch.num_params() {
            return Err(Error::InvalidThetaFile(format!(
                "expected {} parameters, found {} bytes",
                arch.num_params(),
                rest.len()
            )));
        }
        let theta = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_parts(arch, theta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

impl ScalarField for Network {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Activations of a batched forward pass, kept for [`Network::backward_batch`].
pub struct BatchTape {
    /// Per block, the input of every layer (`fan_in × B`).
    blocks: Vec<Vec<DMatrix<f64>>>,
    /// Term weights (`terms × B`) for periodic networks.
    weights: Option<DMatrix<f64>>,
    /// Periodic networks evaluate their blocks once per distinct spatial
    /// input; `columns[j]` is the block column of point `j`.
    columns: Vec<usize>,
    len: usize,
}

impl BatchTape {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn mlp_forward_batch(layers: &[LayerSlot], theta: &[f64], input: DMatrix<f64>, acts: Option<&mut Vec<DMatrix<f64>>>) -> Vec<f64> {
    let last = layers.len() - 1;
    let mut cur = input;
    let mut saved = Vec::new();
    for (k, l) in layers.iter().enumerate() {
        let w = DMatrix::from_row_slice(l.fan_out, l.fan_in, &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out]);
        let b = &theta[l.bias_offset..l.bias_offset + l.fan_out];
        let mut z = &w * &cur;
        for mut col in z.column_iter_mut() {
            for (v, bias) in col.iter_mut().zip(b) {
                *v += bias;
                if k != last && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        let prev = std::mem::replace(&mut cur, z);
        if acts.is_some() {
            saved.push(prev);
        }
    }
    if let Some(a) = acts {
        *a = saved;
    }
    cur.row(0).iter().copied().collect()
}

fn mlp_backward_batch(layers: &[LayerSlot], theta: &[f64], acts: &[DMatrix<f64>], upstream: DMatrix<f64>, grad: &mut [f64]) {
    let mut delta = upstream;
    for (k, l) in layers.iter().enumerate().rev() {
        let input = &acts[k];
        let gw = &delta * input.transpose();
        for o in 0..l.fan_out {
            let row = l.weight_offset + o * l.fan_in;
            for i in 0..l.fan_in {
                grad[row + i] += gw[(o, i)];
            }
            grad[l.bias_offset + o] += delta.row(o).sum();
        }
        if k == 0 {
            break;
        }
        let w = DMatrix::from_row_slice(l.fan_out, l.fan_in, &theta[l.weight_offset..l.weight_offset + l.fan_in * l.fan_out]);
        let mut prev = w.transpose() * &delta;
        for (p, v) in prev.iter_mut().zip(input.iter()) {
            if *v <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
}

impl Network {
    fn batch_input(&self, xs: &[f64], n: usize, cols: usize) -> DMatrix<f64> {
        let dim = self.input_dim();
        DMatrix::from_fn(cols, n, |r, c| xs[c * dim + r])
    }

    fn check_flat(&self, xs: &[f64]) -> Result<usize> {
        let dim = self.input_dim();
        if xs.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: xs.len() % dim,
            });
        }
        Ok(xs.len() / dim)
    }

    /// `Φ` at every point of the row-major `n × input_dim` array `xs`.
    pub fn eval_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run_batch(xs, false)?.0)
    }

    /// [`Network::eval_batch`] keeping activations for a backward pass.
    pub fn eval_batch_with_tape(&self, xs: &[f64]) -> Result<(Vec<f64>, BatchTape)> {
        self.run_batch(xs, true)
    }

    fn run_batch(&self, xs: &[f64], keep: bool) -> Result<(Vec<f64>, BatchTape)> {
        let n = self.check_flat(xs)?;
        let dim = self.input_dim();
        let mut tape = BatchTape {
            blocks: Vec::new(),
            weights: None,
            columns: Vec::new(),
            len: n,
        };
        if n == 0 {
            return Ok((Vec::new(), tape));
        }
        if self.terms.is_empty() {
            let mut acts = Vec::new();
            let out = mlp_forward_batch(&self.layers, &self.theta, self.batch_input(xs, n, dim), keep.then_some(&mut acts));
            if keep {
                tape.blocks.push(acts);
            }
            return Ok((out, tape));
        }
        let spatial = self.spatial_dim();
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut distinct: Vec<usize> = Vec::new();
        let columns: Vec<usize> = (0..n)
            .map(|j| {
                let key = xs[j * dim..j * dim + spatial].iter().map(|v| v.to_bits()).collect();
                *seen.entry(key).or_insert_with(|| {
                    distinct.push(j);
                    distinct.len() - 1
                })
            })
            .collect();
        let input = DMatrix::from_fn(spatial, distinct.len(), |r, c| xs[distinct[c] * dim + r]);
        let weights = DMatrix::from_fn(self.terms.len(), n, |t, j| self.terms[t].weight(&xs[j * dim..(j + 1) * dim]));
        let mut out = vec![0.0; n];
        for (t, block) in self.theta.chunks_exact(self.block_len).enumerate() {
            let mut acts = Vec::new();
            let phi = mlp_forward_batch(&self.layers, block, input.clone(), keep.then_some(&mut acts));
            for (j, o) in out.iter_mut().enumerate() {
                *o += weights[(t, j)] * phi[columns[j]];
            }
            if keep {
                tape.blocks.push(acts);
            }
        }
        if keep {
            tape.weights = Some(weights);
            tape.columns = columns;
        }
        Ok((out, tape))
    }

    /// Adds `Σ_j upstream_j ∇_θ Φ(x_j)` for the points of `tape`.
    pub fn backward_batch(&self, tape: &BatchTape, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        if upstream.len() != tape.len || grad.len() != self.theta.len() {
            return Err(Error::ShapeMismatch {
                expected: tape.len,
                got: upstream.len(),
            });
        }
        if tape.len == 0 {
            return Ok(());
        }
        if tape.blocks.is_empty() {
            return Err(Error::InvalidArgument("tape was recorded without activations".into()));
        }
        match &tape.weights {
            None => {
                let up = DMatrix::from_row_slice(1, tape.len, upstream);
                mlp_backward_batch(&self.layers, &self.theta, &tape.blocks[0], up, grad);
            }
            Some(weights) => {
                for (t, (block, gblock)) in self
                    .theta
                    .chunks_exact(self.block_len)
                    .zip(grad.chunks_exact_mut(self.block_len))
                    .enumerate()
                {
                    let mut up = DMatrix::zeros(1, tape.blocks[t][0].ncols());
                    for (j, &c) in tape.columns.iter().enumerate() {
                        up[(0, c)] += upstream[j] * weights[(t, j)];
                    }
                    mlp_backward_batch(&self.layers, block, &tape.blocks[t], up, gblock);
                }
            }
        }
        Ok(())
    }
}
