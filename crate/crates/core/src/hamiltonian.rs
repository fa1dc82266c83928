//! Continuous Hamiltonians `H(x, p)`, their `p`-gradients and the slope
//! bound `C_H(L) = sup_{|p| ≤ L} |∇_p H(x, p)|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The Hamiltonians supported by the solvers.
///
/// Terms of the form `|·|` are differentiated with the convention
/// `sgn(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hamiltonian {
    /// `|p|² − 1`
    EikonalSquared,
    /// `|p| − 1`
    EikonalNorm,
    /// `|p|²/2 + |x|²/2`
    Quadratic,
    /// Shortest-path Hamiltonian of a car that drives forwards and
    /// backwards at speed at most `sigma` with angular velocity at most
    /// `1/rho`; the state is `(x, y, ω)`.
    ReedsShepp { sigma: f64, rho: f64 },
    /// Isaacs Hamiltonian of the pursuit-evasion game in relative
    /// coordinates `(X, Y, ω_e, ω_p)`.
    PursuitEvasion {
        sigma_e: f64,
        rho_e: f64,
        sigma_p: f64,
        rho_p: f64,
    },
}

pub(crate) fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Hamiltonian {
    /// Problem dimension this Hamiltonian requires, if fixed.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            Hamiltonian::ReedsShepp { .. } => Some(3),
            Hamiltonian::PursuitEvasion { .. } => Some(4),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params: Vec<(&str, f64)> = match self {
            Hamiltonian::ReedsShepp { sigma, rho } => vec![("sigma", *sigma), ("rho", *rho)],
            Hamiltonian::PursuitEvasion {
                sigma_e,
                rho_e,
                sigma_p,
                rho_p,
            } => vec![
                ("sigma_e", *sigma_e),
                ("rho_e", *rho_e),
                ("sigma_p", *sigma_p),
                ("rho_p", *rho_p),
            ],
            _ => Vec::new(),
        };
        for (name, v) in params {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "hamiltonian parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn check(&self, x: &[f64], p: &[f64]) -> Result<()> {
        if x.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: p.len(),
            });
        }
        if let Some(d) = self.required_dim() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// `H(x, p)`.
    pub fn eval(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        self.check(x, p)?;
        Ok(self.eval_unchecked(x, p))
    }

    /// `∇_p H(x, p)`.
    pub fn grad_p(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check(x, p)?;
        let mut g = vec![0.0; p.len()];
        self.grad_p_into(x, p, &mut g);
        Ok(g)
    }

    /// `H(x, p)` without the dimension check. Panics on short slices.
    pub fn eval_unchecked(&self, x: &[f64], p: &[f64]) -> f64 {
        match self {
            Hamiltonian::EikonalSquared => norm_sq(p) - 1.0,
            Hamiltonian::EikonalNorm => norm_sq(p).sqrt() - 1.0,
            Hamiltonian::Quadratic => 0.5 * norm_sq(p) + 0.5 * norm_sq(x),
            Hamiltonian::ReedsShepp { sigma, rho } => {
                let w = x[2];
                sigma * (p[0] * w.cos() + p[1] * w.sin()).abs() + p[2].abs() / rho - 1.0
            }
            Hamiltonian::PursuitEvasion {
                sigma_e,
                rho_e,
                sigma_p,
                rho_p,
            } => {
                let (we, wp) = (x[2], x[3]);
                sigma_p * (p[0] * wp.cos() + p[1] * wp.sin()).abs() + p[3].abs() / rho_p
                    - sigma_e * (p[0] * we.cos() + p[1] * we.sin()).abs()
                    - p[2].abs() / rho_e
            }
        }
    }

    /// Writes `∇_p H(x, p)` into `out` without the dimension check.
    pub fn grad_p_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        match self {
            Hamiltonian::EikonalSquared => {
                for (o, pi) in out.iter_mut().zip(p) {
                    *o = 2.0 * pi;
                }
            }
            Hamiltonian::EikonalNorm => {
                let n = norm_sq(p).sqrt();
                for (o, pi) in out.iter_mut().zip(p) {
                    *o = if n > 0.0 { pi / n } else { 0.0 };
                }
            }
            Hamiltonian::Quadratic => out.copy_from_slice(p),
            Hamiltonian::ReedsShepp { sigma, rho } => {
                let (c, s) = (x[2].cos(), x[2].sin());
                let k = sigma * sgn(p[0] * c + p[1] * s);
                out[0] = k * c;
                out[1] = k * s;
                out[2] = sgn(p[2]) / rho;
            }
            Hamiltonian::PursuitEvasion {
                sigma_e,
                rho_e,
                sigma_p,
                rho_p,
            } => {
                let (ce, se) = (x[2].cos(), x[2].sin());
                let (cp, sp) = (x[3].cos(), x[3].sin());
                let kp = sigma_p * sgn(p[0] * cp + p[1] * sp);
                let ke = sigma_e * sgn(p[0] * ce + p[1] * se);
                out[0] = kp * cp - ke * ce;
                out[1] = kp * sp - ke * se;
                out[2] = -sgn(p[2]) / rho_e;
                out[3] = sgn(p[3]) / rho_p;
            }
        }
    }

    /// `sup_{|p| ≤ L, x} |∇_p H(x, p)|` in closed form.
    pub fn ch_bound(&self, lipschitz: f64) -> Result<f64> {
        if !(lipschitz > 0.0) {
            return Err(Error::NonPositiveL(lipschitz));
        }
        Ok(match self {
            Hamiltonian::EikonalSquared => 2.0 * lipschitz,
            Hamiltonian::EikonalNorm => 1.0,
            Hamiltonian::Quadratic => lipschitz,
            Hamiltonian::ReedsShepp { sigma, rho } => (sigma * sigma + 1.0 / (rho * rho)).sqrt(),
            Hamiltonian::PursuitEvasion {
                sigma_e,
                rho_e,
                sigma_p,
                rho_p,
            } => ((sigma_e + sigma_p).powi(2) + 1.0 / (rho_e * rho_e) + 1.0 / (rho_p * rho_p)).sqrt(),
        })
    }

    /// Distance of `p` from the nearest non-differentiable point, measured
    /// on the arguments of the `|·|` terms. Infinite for smooth kinds
    /// (`EikonalNorm` uses `|p|`).
    pub fn kink_distance(&self, x: &[f64], p: &[f64]) -> f64 {
        match self {
            Hamiltonian::EikonalSquared | Hamiltonian::Quadratic => f64::INFINITY,
            Hamiltonian::EikonalNorm => norm_sq(p).sqrt(),
            Hamiltonian::ReedsShepp { .. } => {
                let w = x[2];
                (p[0] * w.cos() + p[1] * w.sin()).abs().min(p[2].abs())
            }
            Hamiltonian::PursuitEvasion { .. } => {
                let (we, wp) = (x[2], x[3]);
                [
                    (p[0] * wp.cos() + p[1] * wp.sin()).abs(),
                    (p[0] * we.cos() + p[1] * we.sin()).abs(),
                    p[2].abs(),
                    p[3].abs(),
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Indices of coordinates that are 2π-periodic angles for this kind.
    pub fn angle_coordinates(&self) -> &'static [usize] {
        match self {
            Hamiltonian::ReedsShepp { .. } => &[2],
            Hamiltonian::PursuitEvasion { .. } => &[2, 3],
            _ => &[],
        }
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}
