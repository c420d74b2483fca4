//! Per-player update directions and utilities.
//!
//! All four rules are assembled from two small tables computed once per
//! covariance view: the products `Σv̂ⱼ` and the Gram matrix `v̂ᵢᵀΣv̂ⱼ`. On a
//! minibatch both come from `Xv̂ⱼ`, so `Σ_t = XᵀX/n′` is never formed.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Mat};

const NORM_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-8;
/// Smallest `|v̂ⱼᵀΣv̂ⱼ|` accepted as an α-penalty denominator.
pub const PENALTY_DENOMINATOR_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    UnitSphere,
    /// `‖v̂ᵢ‖ ≤ 1`, used by GHA.
    UnitBall,
}

/// The `k` candidate eigenvectors, stored on the columns of a `d x k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenState {
    vectors: Mat,
    constraint: Constraint,
}

impl EigenState {
    pub fn new(vectors: Mat, constraint: Constraint) -> Result<Self> {
        let state = EigenState {
            vectors,
            constraint,
        };
        state.check()?;
        Ok(state)
    }

    /// Verifies the norm invariant of the constraint on every column.
    pub fn check(&self) -> Result<()> {
        for i in 0..self.k() {
            let n = norm(&self.vectors.col(i));
            let ok = match self.constraint {
                Constraint::UnitSphere => (n - 1.0).abs() <= NORM_TOL,
                Constraint::UnitBall => n <= 1.0 + NORM_TOL,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "column {i} has norm {n}, violating {:?}",
                    self.constraint
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.vectors.cols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    pub fn into_vectors(self) -> Mat {
        self.vectors
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    pub(crate) fn set_vector(&mut self, i: usize, v: &[f64]) -> Result<()> {
        self.vectors.set_col(i, v)
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.k() {
            return Err(Error::Index {
                index: i,
                len: self.k(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// Unbiased pseudo-gradient `Σv̂ᵢ − Σⱼ<ᵢ (v̂ᵢᵀΣv̂ⱼ) v̂ⱼ`.
    Mu,
    /// Gradient of the ratio-penalty utility.
    Alpha,
    /// Generalized Hebbian update, self-penalty included.
    Gha,
    /// True gradient of the deflated Rayleigh quotient.
    MuGrad,
}

impl UpdateRule {
    pub fn constraint(self) -> Constraint {
        match self {
            UpdateRule::Gha => Constraint::UnitBall,
            _ => Constraint::UnitSphere,
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Mu => "mu",
            UpdateRule::Alpha => "alpha",
            UpdateRule::Gha => "gha",
            UpdateRule::MuGrad => "mu-grad",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(UpdateRule::Mu),
            "alpha" => Ok(UpdateRule::Alpha),
            "gha" => Ok(UpdateRule::Gha),
            "mu-grad" | "mu_grad" => Ok(UpdateRule::MuGrad),
            other => Err(Error::config(format!("unknown update rule {other:?}"))),
        }
    }
}

/// Where `Σ` comes from.
#[derive(Debug, Clone, Copy)]
pub enum CovView<'a> {
    /// An explicit symmetric `d x d` matrix.
    Sigma(&'a Mat),
    /// An `n′ x d` sample block standing for `XᵀX / n′`.
    Batch(&'a Mat),
}

impl<'a> CovView<'a> {
    /// Wraps an explicit covariance after checking symmetry.
    pub fn sigma(sigma: &'a Mat) -> Result<Self> {
        if !sigma.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::shape("covariance must be square and symmetric"));
        }
        Ok(CovView::Sigma(sigma))
    }

    pub fn batch(x: &'a Mat) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::shape("empty minibatch"));
        }
        Ok(CovView::Batch(x))
    }

    pub fn dim(&self) -> usize {
        match self {
            CovView::Sigma(s) => s.cols(),
            CovView::Batch(x) => x.cols(),
        }
    }
}

/// `Σv̂ⱼ` and `v̂ᵢᵀΣv̂ⱼ` for the leading players of a state.
#[derive(Debug, Clone)]
pub struct CovProducts {
    sigma_v: Vec<Vec<f64>>,
    gram: Mat,
}

impl CovProducts {
    /// Products for players `0..players`.
    pub fn compute(cov: CovView<'_>, state: &EigenState, players: usize) -> Result<Self> {
        if cov.dim() != state.dim() {
            return Err(Error::shape(format!(
                "covariance has dimension {}, state has {}",
                cov.dim(),
                state.dim()
            )));
        }
        let players = players.min(state.k());
        let vs: Vec<Vec<f64>> = (0..players).map(|j| state.vector(j)).collect();
        let mut gram = Mat::zeros(players, players);
        let sigma_v = match cov {
            CovView::Sigma(s) => {
                let sv: Vec<Vec<f64>> = vs.iter().map(|v| s.mat_vec(v)).collect::<Result<_>>()?;
                for i in 0..players {
                    for j in 0..players {
                        gram[(i, j)] = dot(&vs[i], &sv[j]);
                    }
                }
                sv
            }
            CovView::Batch(x) => {
                let inv_n = 1.0 / x.rows() as f64;
                let xv: Vec<Vec<f64>> = vs.iter().map(|v| x.mat_vec(v)).collect::<Result<_>>()?;
                for i in 0..players {
                    for j in 0..=i {
                        let g = dot(&xv[i], &xv[j]) * inv_n;
                        gram[(i, j)] = g;
                        gram[(j, i)] = g;
                    }
                }
                xv.iter()
                    .map(|w| {
                        let mut sv = x.t_mat_vec(w)?;
                        sv.iter_mut().for_each(|e| *e *= inv_n);
                        Ok(sv)
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(CovProducts { sigma_v, gram })
    }

    pub fn players(&self) -> usize {
        self.sigma_v.len()
    }

    /// `Σv̂ⱼ`.
    pub fn sigma_v(&self, j: usize) -> &[f64] {
        &self.sigma_v[j]
    }

    /// `v̂ᵢᵀΣv̂ⱼ`.
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[(i, j)]
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.players() {
            return Err(Error::Index {
                index: i,
                len: self.players(),
            });
        }
        Ok(())
    }

    fn denominator(&self, j: usize) -> Result<f64> {
        let value = self.gram(j, j);
        if value.abs() < PENALTY_DENOMINATOR_MIN {
            return Err(Error::SingularPenalty { parent: j, value });
        }
        Ok(value)
    }

    /// Update direction of player `i` under `rule`.
    pub fn direction(&self, rule: UpdateRule, state: &EigenState, i: usize) -> Result<Vec<f64>> {
        self.check_player(i)?;
        let mut out = self.sigma_v[i].clone();
        match rule {
            UpdateRule::Mu => {
                for j in 0..i {
                    axpy(-self.gram(i, j), &state.vector(j), &mut out);
                }
            }
            UpdateRule::Gha => {
                for j in 0..=i {
                    axpy(-self.gram(i, j), &state.vector(j), &mut out);
                }
            }
            UpdateRule::Alpha => {
                for j in 0..i {
                    let coef = self.gram(i, j) / self.denominator(j)?;
                    axpy(-coef, &self.sigma_v[j], &mut out);
                }
            }
            UpdateRule::MuGrad => {
                let vi = state.vector(i);
                for j in 0..i {
                    let vj = state.vector(j);
                    axpy(-0.5 * self.gram(i, j), &vj, &mut out);
                    axpy(-0.5 * dot(&vi, &vj), &self.sigma_v[j], &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Ratio-penalty utility of player `i`.
    pub fn alpha_utility(&self, i: usize) -> Result<f64> {
        self.check_player(i)?;
        let mut u = self.gram(i, i);
        for j in 0..i {
            let g = self.gram(i, j);
            u -= g * g / self.denominator(j)?;
        }
        Ok(u)
    }

    /// Deflated Rayleigh value `v̂ᵢᵀ[I − Σⱼ<ᵢ v̂ⱼv̂ⱼᵀ]Σv̂ᵢ`.
    pub fn mu_utility(&self, state: &EigenState, i: usize) -> Result<f64> {
        self.check_player(i)?;
        let vi = state.vector(i);
        let mut u = self.gram(i, i);
        for j in 0..i {
            u -= dot(&vi, &state.vector(j)) * self.gram(j, i);
        }
        Ok(u)
    }
}

fn player_products(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<CovProducts> {
    state.check_player(i)?;
    CovProducts::compute(cov, state, i + 1)
}

/// `Σv̂ᵢ − Σⱼ<ᵢ (v̂ᵢᵀΣv̂ⱼ) v̂ⱼ`.
pub fn mu_update(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<Vec<f64>> {
    player_products(cov, state, i)?.direction(UpdateRule::Mu, state, i)
}

/// `Σv̂ᵢ − Σⱼ<ᵢ (v̂ᵢᵀΣv̂ⱼ / v̂ⱼᵀΣv̂ⱼ) Σv̂ⱼ`, with one shared `Σ` estimate.
pub fn alpha_update(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<Vec<f64>> {
    player_products(cov, state, i)?.direction(UpdateRule::Alpha, state, i)
}

/// `Σv̂ᵢ − Σⱼ≤ᵢ (v̂ᵢᵀΣv̂ⱼ) v̂ⱼ`.
pub fn gha_update(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<Vec<f64>> {
    player_products(cov, state, i)?.direction(UpdateRule::Gha, state, i)
}

/// `Σv̂ᵢ − ½Σⱼ<ᵢ [(v̂ᵢᵀΣv̂ⱼ) v̂ⱼ + (v̂ᵢᵀv̂ⱼ) Σv̂ⱼ]`.
pub fn mu_grad_update(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<Vec<f64>> {
    player_products(cov, state, i)?.direction(UpdateRule::MuGrad, state, i)
}

pub fn update(rule: UpdateRule, cov: CovView<'_>, state: &EigenState, i: usize) -> Result<Vec<f64>> {
    player_products(cov, state, i)?.direction(rule, state, i)
}

pub fn alpha_utility(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<f64> {
    player_products(cov, state, i)?.alpha_utility(i)
}

pub fn mu_utility(cov: CovView<'_>, state: &EigenState, i: usize) -> Result<f64> {
    player_products(cov, state, i)?.mu_utility(state, i)
}
