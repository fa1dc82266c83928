//! Dense grid machinery on `(0, 1)^d` with `δ = 1/N`: the discrete
//! residual functional `F(U)`, its closed-form gradient, the adjoint
//! operator `A_N(V) + αΔ_N`, a monotone fixed-point solver, direct
//! minimization of `F`, the Riccati reference solution and closed-form
//! ground truths.
//!
//! The second difference uses a `2δ` denominator,
//! `D²_i U_β = (U_{β+e_i} + U_{β−e_i} − 2U_β)/(2δ)`, so that the residual
//! `W_β = H(x_β, DU_β) − α Σ_i D²_i U_β` coincides with the Lax-Friedrichs
//! scheme at the grid nodes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::hamiltonian::Hamiltonian;
use crate::scheme::{ScalarField, SchemeConfig};

/// Interior node cap for the dense oracle.
pub const MAX_INTERIOR_NODES: usize = 4096;

/// Uniform grid `{0, δ, …, 1}^d` with `δ = 1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("grid dimension must be >= 1".into()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid needs N >= 2, got {n}")));
        }
        let g = Self { dim, n };
        let interior = g.interior_len();
        if interior > MAX_INTERIOR_NODES {
            return Err(Error::GridTooLarge(interior));
        }
        Ok(g)
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `(N + 1)^d`
    pub fn len(&self) -> usize {
        (self.n + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(N − 1)^d`
    pub fn interior_len(&self) -> usize {
        (self.n - 1).pow(self.dim as u32)
    }

    /// Scheme configuration on this grid.
    pub fn scheme(&self, alpha: f64) -> SchemeConfig {
        SchemeConfig::new(alpha, self.delta())
    }

    /// Offset between `β` and `β + e_i` in the closed (lexicographic) layout.
    pub fn stride(&self, i: usize) -> usize {
        (self.n + 1).pow((self.dim - 1 - i) as u32)
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut beta = vec![0; self.dim];
        for i in (0..self.dim).rev() {
            beta[i] = k % (self.n + 1);
            k /= self.n + 1;
        }
        beta
    }

    pub fn flat_index(&self, beta: &[usize]) -> usize {
        beta.iter().fold(0, |acc, b| acc * (self.n + 1) + b)
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        let d = self.delta();
        self.multi_index(k).into_iter().map(|b| b as f64 * d).collect()
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.multi_index(k).iter().all(|&b| b >= 1 && b < self.n)
    }

    /// Closed-layout indices of the interior nodes, in lexicographic order.
    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_interior(k)).collect()
    }

    /// Closed-layout index → interior position.
    fn interior_map(&self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.len()];
        for (j, k) in self.interior_indices().into_iter().enumerate() {
            map[k] = Some(j);
        }
        map
    }

    fn check_scheme(&self, cfg: &SchemeConfig) -> Result<()> {
        cfg.validate()?;
        if (cfg.delta - self.delta()).abs() > 1e-12 {
            return Err(Error::InvalidScheme(format!(
                "grid oracle needs delta = 1/N = {}, got {}",
                self.delta(),
                cfg.delta
            )));
        }
        if cfg.tau != 0.0 {
            return Err(Error::InvalidScheme("grid oracle does not support tau > 0".into()));
        }
        Ok(())
    }
}

/// Values on every node of the closed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.node(k))).collect();
        Self { grid, values }
    }

    /// Overwrites the boundary nodes with `g`.
    pub fn pin_boundary(&mut self, g: impl Fn(&[f64]) -> f64) {
        for k in 0..self.grid.len() {
            if !self.grid.is_interior(k) {
                self.values[k] = g(&self.grid.node(k));
            }
        }
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_indices().into_iter().map(|k| self.values[k]).collect()
    }

    /// Largest absolute difference quotient between neighbouring nodes.
    pub fn lipschitz(&self) -> f64 {
        let g = self.grid;
        let mut best: f64 = 0.0;
        for k in 0..g.len() {
            let beta = g.multi_index(k);
            for (i, &b) in beta.iter().enumerate() {
                if b < g.n {
                    let q = (self.values[k + g.stride(i)] - self.values[k]).abs() / g.delta();
                    best = best.max(q);
                }
            }
        }
        best
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV rows `(β_1, …, β_d, value)` for every node.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.grid.len())
            .map(|k| {
                let mut row: Vec<String> = self.grid.multi_index(k).iter().map(|b| b.to_string()).collect();
                row.push(self.values[k].to_string());
                row
            })
            .collect()
    }
}

/// Centred gradient `(U_{β+e_i} − U_{β−e_i})/(2δ)` at closed index `k`.
fn centred_gradient(u: &GridFunction, k: usize) -> Vec<f64> {
    let g = u.grid;
    let h2 = 2.0 * g.delta();
    (0..g.dim)
        .map(|i| (u.values[k + g.stride(i)] - u.values[k - g.stride(i)]) / h2)
        .collect()
}

/// Residual `W_β` at interior closed index `k`.
fn node_residual(h: &Hamiltonian, alpha: f64, u: &GridFunction, k: usize) -> f64 {
    let g = u.grid;
    let x = g.node(k);
    let p = centred_gradient(u, k);
    let lap: f64 = (0..g.dim)
        .map(|i| u.values[k + g.stride(i)] + u.values[k - g.stride(i)] - 2.0 * u.values[k])
        .sum();
    h.eval_unchecked(&x, &p) - alpha * lap / (2.0 * g.delta())
}

fn check_shape(grid: &GridSpec, u: &GridFunction, h: &Hamiltonian) -> Result<()> {
    if u.grid != *grid || u.values.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: u.values.len(),
        });
    }
    if let Some(d) = h.required_dim() {
        if d != grid.dim {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: grid.dim,
            });
        }
    }
    Ok(())
}

/// Residual `W` on the interior nodes (interior order).
pub fn residual_vector(h: &Hamiltonian, cfg: &SchemeConfig, grid: &GridSpec, u: &GridFunction) -> Result<Vec<f64>> {
    grid.check_scheme(cfg)?;
    check_shape(grid, u, h)?;
    Ok(grid
        .interior_indices()
        .into_iter()
        .map(|k| node_residual(h, cfg.alpha, u, k))
        .collect())
}

/// `F(U) = δ^d Σ_{β ∈ B} W_β²`.
pub fn discrete_functional(h: &Hamiltonian, cfg: &SchemeConfig, grid: &GridSpec, u: &GridFunction) -> Result<f64> {
    let w = residual_vector(h, cfg, grid, u)?;
    Ok(grid.delta().powi(grid.dim as i32) * w.iter().map(|v| v * v).sum::<f64>())
}

/// `V^{(i)}_β = ∂_{p_i} H(x_β, DU_β)` on interior nodes, one vector per direction.
fn slope_sensitivities(h: &Hamiltonian, u: &GridFunction, interior: &[usize]) -> Vec<Vec<f64>> {
    let g = u.grid;
    let mut v = vec![vec![0.0; interior.len()]; g.dim];
    let mut buf = vec![0.0; g.dim];
    for (j, &k) in interior.iter().enumerate() {
        let p = centred_gradient(u, k);
        h.grad_p_into(&g.node(k), &p, &mut buf);
        for i in 0..g.dim {
            v[i][j] = buf[i];
        }
    }
    v
}

/// `∂F/∂U_β` on the interior:
/// `−δ^{d−1} [Σ_i (V^{(i)}_{β+e_i} W_{β+e_i} − V^{(i)}_{β−e_i} W_{β−e_i}) + α Σ_i (W_{β+e_i} + W_{β−e_i} − 2W_β)]`
/// with `V` and `W` zero off the interior.
pub fn grad_discrete_functional(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    grid: &GridSpec,
    u: &GridFunction,
) -> Result<Vec<f64>> {
    let w = residual_vector(h, cfg, grid, u)?;
    let interior = grid.interior_indices();
    let map = grid.interior_map();
    let v = slope_sensitivities(h, u, &interior);
    let scale = -grid.delta().powi(grid.dim as i32 - 1);
    let at = |k: usize| map[k];
    Ok(interior
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut acc = 0.0;
            for i in 0..grid.dim {
                let s = grid.stride(i);
                if let Some(jp) = at(k + s) {
                    acc += v[i][jp] * w[jp] + cfg.alpha * w[jp];
                }
                if let Some(jm) = at(k - s) {
                    acc += -v[i][jm] * w[jm] + cfg.alpha * w[jm];
                }
                acc -= 2.0 * cfg.alpha * w[j];
            }
            scale * acc
        })
        .collect())
}

/// The assembled adjoint system of a grid function.
#[derive(Clone, Debug)]
pub struct AdjointSystem {
    /// Residual on interior nodes.
    pub w: Vec<f64>,
    /// `V^{(i)}` on interior nodes, indexed `[i][node]`.
    pub v: Vec<Vec<f64>>,
    /// `A_N(V)`.
    pub transport: DMatrix<f64>,
    /// `Δ_N` (zero Dirichlet data).
    pub laplacian: DMatrix<f64>,
    /// `A_N(V) + αΔ_N`.
    pub matrix: DMatrix<f64>,
}

impl AdjointSystem {
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.matrix.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn sigma_min(&self) -> f64 {
        self.matrix.clone().singular_values().min()
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v.iter().flatten().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Matrix of `Δ_N W = Σ_i (W_{β+e_i} + W_{β−e_i} − 2W_β)` on the interior.
pub fn laplacian_matrix(grid: &GridSpec) -> DMatrix<f64> {
    let interior = grid.interior_indices();
    let map = grid.interior_map();
    let m = interior.len();
    let mut lap = DMatrix::zeros(m, m);
    for (j, &k) in interior.iter().enumerate() {
        lap[(j, j)] = -2.0 * grid.dim as f64;
        for i in 0..grid.dim {
            let s = grid.stride(i);
            if let Some(jp) = map[k + s] {
                lap[(j, jp)] = 1.0;
            }
            if let Some(jm) = map[k - s] {
                lap[(j, jm)] = 1.0;
            }
        }
    }
    lap
}

/// Matrix of `(A_N(V) W)_β = Σ_i (V^{(i)}_{β+e_i} W_{β+e_i} − V^{(i)}_{β−e_i} W_{β−e_i})`.
pub fn transport_matrix(grid: &GridSpec, v: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let interior = grid.interior_indices();
    if v.len() != grid.dim || v.iter().any(|c| c.len() != interior.len()) {
        return Err(Error::ShapeMismatch {
            expected: grid.dim * interior.len(),
            got: v.iter().map(Vec::len).sum(),
        });
    }
    let map = grid.interior_map();
    let m = interior.len();
    let mut a = DMatrix::zeros(m, m);
    for (j, &k) in interior.iter().enumerate() {
        for (i, vi) in v.iter().enumerate() {
            let s = grid.stride(i);
            if let Some(jp) = map[k + s] {
                a[(j, jp)] += vi[jp];
            }
            if let Some(jm) = map[k - s] {
                a[(j, jm)] -= vi[jm];
            }
        }
    }
    Ok(a)
}

/// Builds `W`, `V`, `A_N(V)`, `Δ_N` and `M = A_N(V) + αΔ_N`; the gradient
/// satisfies `∇F(U) = −δ^{d−1} M W`.
pub fn assemble_adjoint(h: &Hamiltonian, cfg: &SchemeConfig, grid: &GridSpec, u: &GridFunction) -> Result<AdjointSystem> {
    let w = residual_vector(h, cfg, grid, u)?;
    let interior = grid.interior_indices();
    let v = slope_sensitivities(h, u, &interior);
    let transport = transport_matrix(grid, &v)?;
    let laplacian = laplacian_matrix(grid);
    let matrix = &transport + &laplacian * cfg.alpha;
    Ok(AdjointSystem {
        w,
        v,
        transport,
        laplacian,
        matrix,
    })
}

/// `λ_min(−Δ_N) = 4d sin²(πδ/2)`.
pub fn smallest_laplacian_eigenvalue(grid: &GridSpec) -> f64 {
    let s = (PI * grid.delta() / 2.0).sin();
    4.0 * grid.dim as f64 * s * s
}

/// Smallest eigenvalue of the assembled `−Δ_N`, computed numerically.
pub fn numerical_laplacian_eigenvalue(grid: &GridSpec) -> f64 {
    let neg = -laplacian_matrix(grid);
    SymmetricEigen::new(neg).eigenvalues.min()
}

/// Lower bound `4αd sin²(πδ/2) − 2d max|V|` on `σ_min(A_N(V) + αΔ_N)`.
pub fn sigma_min_lower_bound(grid: &GridSpec, alpha: f64, max_abs_v: f64) -> f64 {
    alpha * smallest_laplacian_eigenvalue(grid) - 2.0 * grid.dim as f64 * max_abs_v
}

/// Result of [`solve_fd_fixed_point`].
#[derive(Clone, Debug)]
pub struct FixedPointSolution {
    pub u: GridFunction,
    pub residual: f64,
    pub iterations: usize,
}

/// Pseudo-time relaxation `U ← U − s Ĥ_α(·, D⁺U, D⁻U)` on the interior with
/// boundary values pinned to `g`, started from `U = 0` inside.
///
/// The update is monotone for `s ≤ δ/(dα)`; the default step is `δ/(4dα)`.
/// Stops when the largest interior residual drops below `tol`.
pub fn solve_fd_fixed_point(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    grid: &GridSpec,
    g: impl Fn(&[f64]) -> f64,
    pseudo_step: Option<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<FixedPointSolution> {
    grid.check_scheme(cfg)?;
    let d = grid.dim as f64;
    let step = pseudo_step.unwrap_or(grid.delta() / (4.0 * d * cfg.alpha));
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("pseudo step must be > 0, got {step}")));
    }
    let mut u = GridFunction::zeros(*grid);
    u.pin_boundary(&g);
    check_shape(grid, &u, h)?;
    let interior = grid.interior_indices();
    let nodes: Vec<Vec<f64>> = interior.iter().map(|&k| grid.node(k)).collect();
    let strides: Vec<usize> = (0..grid.dim).map(|i| grid.stride(i)).collect();
    let delta = grid.delta();
    let mut update = vec![0.0; interior.len()];
    let mut p = vec![0.0; grid.dim];
    let stride = (max_iters / 1000).max(1);
    let mut trace = Vec::new();
    let mut worst = f64::INFINITY;
    for it in 0..max_iters {
        worst = 0.0;
        for (j, &k) in interior.iter().enumerate() {
            let mut lap = 0.0;
            for (i, &s) in strides.iter().enumerate() {
                let (up, um) = (u.values[k + s], u.values[k - s]);
                p[i] = (up - um) / (2.0 * delta);
                lap += up + um - 2.0 * u.values[k];
            }
            let r = h.eval_unchecked(&nodes[j], &p) - cfg.alpha * lap / (2.0 * delta);
            worst = worst.max(r.abs());
            update[j] = r;
        }
        if it % stride == 0 {
            trace.push(worst);
        }
        if worst < tol {
            return Ok(FixedPointSolution {
                u,
                residual: worst,
                iterations: it,
            });
        }
        for (j, &k) in interior.iter().enumerate() {
            u.values[k] -= step * update[j];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: worst,
        trace,
    })
}

/// Result of [`minimize_grid_functional`].
#[derive(Clone, Debug)]
pub struct MinimizeOutcome {
    pub u: GridFunction,
    pub max_abs_residual: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent on `F(U)` over the interior values with the boundary
/// pinned to `g`, starting from `start`.
///
/// Uses Armijo backtracking with an initial trial step `descent_step`
/// that adapts between iterations. Converged when `‖∇F‖_∞ < tol`.
pub fn minimize_grid_functional(
    h: &Hamiltonian,
    cfg: &SchemeConfig,
    grid: &GridSpec,
    g: impl Fn(&[f64]) -> f64,
    start: &GridFunction,
    descent_step: f64,
    max_iters: usize,
    tol: f64,
) -> Result<MinimizeOutcome> {
    grid.check_scheme(cfg)?;
    check_shape(grid, start, h)?;
    let mut u = start.clone();
    u.pin_boundary(&g);
    let interior = grid.interior_indices();
    let mut f = discrete_functional(h, cfg, grid, &u)?;
    let mut grad = grad_discrete_functional(h, cfg, grid, &u)?;
    let mut step = descent_step;
    let mut iterations = 0;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    while iterations < max_iters && sup(&grad) >= tol {
        let g2: f64 = grad.iter().map(|a| a * a).sum();
        let mut trial = u.clone();
        loop {
            for (j, &k) in interior.iter().enumerate() {
                trial.values[k] = u.values[k] - step * grad[j];
            }
            let ft = discrete_functional(h, cfg, grid, &trial)?;
            if ft <= f - 1e-4 * step * g2 {
                f = ft;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                break;
            }
        }
        if step < 1e-300 {
            break;
        }
        u = trial;
        grad = grad_discrete_functional(h, cfg, grid, &u)?;
        step *= 1.5;
        iterations += 1;
    }
    let w = residual_vector(h, cfg, grid, &u)?;
    let grad_norm = sup(&grad);
    Ok(MinimizeOutcome {
        u,
        max_abs_residual: sup(&w),
        grad_norm,
        iterations,
        converged: grad_norm < tol,
    })
}

/// Random grid function with interior values uniform in `[lo, hi]` and the
/// boundary pinned to `g`.
pub fn random_grid_function(grid: &GridSpec, g: impl Fn(&[f64]) -> f64, lo: f64, hi: f64, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = GridFunction::zeros(*grid);
    for v in &mut u.values {
        *v = rng.random_range(lo..=hi);
    }
    u.pin_boundary(g);
    u
}

/// RK4 trajectory of `Ė = −E² − I`, `E(0) = A`, with fixed step `1e-4`.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    step: f64,
    snapshots: Vec<DMatrix<f64>>,
}

/// Closeness to the blow-up time at which integration is refused.
const BLOW_UP_MARGIN: f64 = 1e-3;

impl RiccatiSolution {
    pub const STEP: f64 = 1e-4;

    /// Integrates up to `t_end`. Fails with `BlowUp` if an eigenvalue `λ` of
    /// the symmetric matrix `a` has `arctan(λ) − t_end ≤ −π/2 + margin`.
    pub fn integrate(a: &DMatrix<f64>, t_end: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::ShapeMismatch {
                expected: a.nrows() * a.nrows(),
                got: a.len(),
            });
        }
        if !(t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t_end}")));
        }
        let lam = SymmetricEigen::new(a.clone()).eigenvalues;
        if lam.iter().any(|l| l.atan() - t_end <= -PI / 2.0 + BLOW_UP_MARGIN) {
            return Err(Error::BlowUp(t_end));
        }
        let steps = (t_end / Self::STEP).ceil() as usize;
        let mut snapshots = Vec::with_capacity(steps + 1);
        snapshots.push(a.clone());
        let mut e = a.clone();
        for _ in 0..steps {
            e = rk4_step(&e, Self::STEP);
            snapshots.push(e.clone());
        }
        Ok(Self {
            step: Self::STEP,
            snapshots,
        })
    }

    pub fn horizon(&self) -> f64 {
        (self.snapshots.len() - 1) as f64 * self.step
    }

    /// `E(t)` for `0 ≤ t ≤ horizon`: the stored step below `t` advanced by
    /// one partial RK4 step.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let t = t.clamp(0.0, self.horizon());
        let k = ((t / self.step).floor() as usize).min(self.snapshots.len() - 1);
        let rest = t - k as f64 * self.step;
        if rest <= 0.0 {
            self.snapshots[k].clone()
        } else {
            rk4_step(&self.snapshots[k], rest)
        }
    }

    /// `x^T E(t) x`.
    pub fn quadratic_form(&self, x: &[f64], t: f64) -> f64 {
        let e = self.at(t);
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += x[i] * e[(i, j)] * x[j];
            }
        }
        s
    }
}

fn riccati_rhs(e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = e.nrows();
    -(e * e) - DMatrix::identity(n, n)
}

fn rk4_step(e: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = riccati_rhs(e);
    let k2 = riccati_rhs(&(e + &k1 * (h / 2.0)));
    let k3 = riccati_rhs(&(e + &k2 * (h / 2.0)));
    let k4 = riccati_rhs(&(e + &k3 * h));
    e + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// `E(t)` for the Riccati equation `Ė = −E² − I`, `E(0) = A`.
pub fn riccati_reference(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    Ok(RiccatiSolution::integrate(a, t)?.at(t))
}

/// The initial matrix `diag(4/25, 1, …, 1)` of the Riccati benchmark.
pub fn riccati_initial_matrix(dim: usize) -> DMatrix<f64> {
    let mut a = DMatrix::identity(dim, dim);
    a[(0, 0)] = 4.0 / 25.0;
    a
}

/// Closed-form viscosity solutions used as ground truth.
#[derive(Clone, Debug)]
pub enum GroundTruth {
    /// `h − ‖x − c‖_∞`
    CubeDistance { center: Vec<f64>, half_width: f64 },
    /// `R − ‖x − c‖`
    BallDistance { center: Vec<f64>, radius: f64 },
    /// `min(‖x − c‖ − r, R − ‖x − c‖)`
    AnnulusDistance {
        center: Vec<f64>,
        inner_radius: f64,
        outer_radius: f64,
    },
    /// `(⟨x, E(t) x⟩ − 1)/2` on inputs `(x, t)`.
    Riccati(RiccatiSolution),
}

impl GroundTruth {
    /// Distance to the boundary of a cube, ball or annulus.
    pub fn distance_to_boundary(domain: &Domain) -> Result<Self> {
        Ok(match domain {
            Domain::Cube { center, half_width } => GroundTruth::CubeDistance {
                center: center.clone(),
                half_width: *half_width,
            },
            Domain::Ball { center, radius } => GroundTruth::BallDistance {
                center: center.clone(),
                radius: *radius,
            },
            Domain::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => GroundTruth::AnnulusDistance {
                center: center.clone(),
                inner_radius: *inner_radius,
                outer_radius: *outer_radius,
            },
            Domain::ProductWithTorus { .. } => {
                return Err(Error::InvalidDomain(
                    "no closed-form ground truth on a torus product".into(),
                ))
            }
        })
    }

    /// The Riccati benchmark `A = diag(4/25, 1, …)` on `[0, horizon]`.
    pub fn riccati(dim: usize, horizon: f64) -> Result<Self> {
        Ok(GroundTruth::Riccati(RiccatiSolution::integrate(
            &riccati_initial_matrix(dim),
            horizon,
        )?))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let dist = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            GroundTruth::CubeDistance { center, half_width } => {
                half_width - x.iter().zip(center).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            }
            GroundTruth::BallDistance { center, radius } => radius - dist(center),
            GroundTruth::AnnulusDistance {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = dist(center);
                (r - inner_radius).min(outer_radius - r)
            }
            GroundTruth::Riccati(sol) => {
                let (space, t) = x.split_at(x.len() - 1);
                0.5 * (sol.quadratic_form(space, t[0]) - 1.0)
            }
        }
    }
}

impl ScalarField for GroundTruth {
    fn value(&self, x: &[f64]) -> f64 {
        GroundTruth::value(self, x)
    }
}
