//! The principal's single-stage problem.
//!
//! Under complete information the principal picks the action she wants and
//! pays exactly the incentive that makes it the agent's best response,
//! `u_e = theta phi'(a_e)`. Under a prior over types she commits to one
//! incentive and every type best-responds to it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use crate::agent::{AgentType, ContractConfig};
use crate::error::{ContractError, Result};
use crate::numeric;

/// Quadrature nodes used by the built-in prior helpers unless told otherwise.
pub const DEFAULT_PRIOR_NODES: usize = 33;

/// Slope below which a maximizer on the interval boundary is treated as a
/// stationary point.
pub const BOUNDARY_SLOPE_TOL: f64 = 1e-6;

/// The principal's gross benefit `rho(a)` from the agent's action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrincipalBenefit {
    /// `k a`.
    Linear { k: f64 },
    /// `coeff a^exponent` with `exponent` in `(0, 1]`.
    Power { coeff: f64, exponent: f64 },
    /// Linear interpolation of `(a, rho)` rows.
    Tabulated { a: Vec<f64>, rho: Vec<f64> },
}

impl PrincipalBenefit {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Linear { k } if !k.is_finite() => {
                Err(ContractError::Config(format!("linear benefit slope {k} must be finite")))
            }
            Self::Power { coeff, exponent } if !coeff.is_finite() || !(*exponent > 0.0 && *exponent <= 1.0) => {
                Err(ContractError::Config(format!(
                    "power benefit needs a finite coefficient and exponent in (0, 1], got ({coeff}, {exponent})"
                )))
            }
            Self::Tabulated { a, rho } => {
                if a.len() < 2 || a.len() != rho.len() {
                    return Err(ContractError::Config("tabulated benefit needs at least two (a, rho) rows".into()));
                }
                if a.iter().chain(rho).any(|v| !v.is_finite()) || a.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ContractError::Config(
                        "tabulated benefit rows must be finite with increasing actions".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: f64) -> Result<f64> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(ContractError::Domain(format!("benefit evaluated at invalid action {a}")));
        }
        match self {
            Self::Linear { k } => Ok(k * a),
            Self::Power { coeff, exponent } => Ok(coeff * a.powf(*exponent)),
            Self::Tabulated { a: xs, rho } => {
                let n = xs.len();
                if a < xs[0] || a > xs[n - 1] {
                    return Err(ContractError::Domain(format!(
                        "benefit table covers [{}, {}], not {a}",
                        xs[0],
                        xs[n - 1]
                    )));
                }
                let j = xs.partition_point(|&x| x <= a).clamp(1, n - 1);
                let w = (a - xs[j - 1]) / (xs[j] - xs[j - 1]);
                Ok(rho[j - 1] + w * (rho[j] - rho[j - 1]))
            }
        }
    }
}

/// A discrete prior over agent types.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypePrior {
    thetas: Vec<f64>,
    weights: Vec<f64>,
}

impl TypePrior {
    /// Requires strictly increasing positive types and positive weights
    /// summing to one within `1e-12`.
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(ContractError::Config("type prior has empty support".into()));
        }
        let (thetas, weights): (Vec<f64>, Vec<f64>) = support.into_iter().unzip();
        if thetas.iter().any(|t| !(t.is_finite() && *t > 0.0)) || thetas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ContractError::Config("prior types must be positive and strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ContractError::Config("prior weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ContractError::Config(format!("prior weights sum to {total}, not 1")));
        }
        Ok(Self { thetas, weights })
    }

    /// Like [`TypePrior::new`] but rescales the weights first.
    pub fn normalized(support: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = support.iter().map(|s| s.1).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(ContractError::Config("prior weights must have a positive finite sum".into()));
        }
        Self::new(support.into_iter().map(|(t, w)| (t, w / total)).collect())
    }

    pub fn point_mass(theta: f64) -> Result<Self> {
        Self::new(vec![(theta, 1.0)])
    }

    /// Uniform density on `[lo, hi]` discretized by the midpoint rule.
    pub fn uniform(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && nodes > 0) {
            return Err(ContractError::Config(format!("uniform prior needs 0 < lo < hi, got [{lo}, {hi}]")));
        }
        let h = (hi - lo) / nodes as f64;
        Self::normalized((0..nodes).map(|i| (lo + h * (i as f64 + 0.5), 1.0)).collect())
    }

    /// Lognormal density discretized at the mid-quantiles `(i + 1/2) / n`,
    /// each carrying weight `1 / n`.
    pub fn lognormal(mu: f64, sigma: f64, nodes: usize) -> Result<Self> {
        let dist = LogNormal::new(mu, sigma).map_err(|e| ContractError::Config(format!("lognormal prior: {e}")))?;
        if nodes == 0 {
            return Err(ContractError::Config("lognormal prior needs at least one node".into()));
        }
        let n = nodes as f64;
        Self::normalized((0..nodes).map(|i| (dist.inverse_cdf((i as f64 + 0.5) / n), 1.0)).collect())
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thetas.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `rho(a) - u a`.
pub fn principal_utility(rho: &PrincipalBenefit, u: f64, a: f64) -> Result<f64> {
    Ok(rho.eval(a)? - u * a)
}

/// Search grid behind a solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverGrid {
    /// Which variable was scanned, `"a"` or `"u"`.
    pub variable: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub grid_size: usize,
    pub refine_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackelbergSolution {
    pub u_e: f64,
    pub a_e: f64,
    pub value: f64,
    /// The maximizer sits on the scanned interval's boundary where the
    /// objective is flat; the true optimum may lie outside.
    pub boundary_flag: bool,
    pub grid_meta: SolverGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeResponse {
    pub theta: f64,
    pub weight: f64,
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExAnteSolution {
    pub u_e: f64,
    /// Each type's response to `u_e`.
    pub a_e: Vec<TypeResponse>,
    pub value: f64,
    pub boundary_flag: bool,
    pub grid_meta: SolverGrid,
}

/// Resolves an endpoint maximizer: flat enough is a warning, otherwise the
/// working interval is too small.
fn boundary_check(objective: impl Fn(f64) -> f64, x: f64, lo: f64, hi: f64, what: &str) -> Result<bool> {
    if x != lo && x != hi {
        return Ok(false);
    }
    let h = 1e-6 * (hi - lo);
    let slope = if x == lo { (objective(lo + h) - objective(lo)) / h } else { (objective(hi) - objective(hi - h)) / h };
    if slope.abs() <= BOUNDARY_SLOPE_TOL {
        Ok(true)
    } else {
        Err(ContractError::Config(format!(
            "{what} maximizer hits the boundary {x} of [{lo}, {hi}] with slope {slope:.3e}; widen the interval"
        )))
    }
}

/// Maximizes `rho(a) - theta a phi'(a)` over the working interval and pays
/// `u_e = theta phi'(a_e)`.
pub fn solve_complete_info(cfg: &ContractConfig, rho: &PrincipalBenefit, theta: AgentType) -> Result<StackelbergSolution> {
    rho.validate()?;
    let cost = cfg.cost();
    let t = theta.theta();
    let objective = |a: f64| -> f64 {
        match (rho.eval(a), cost.eval_deriv(a)) {
            (Ok(r), Ok(d)) => r - t * a * d,
            _ => f64::NAN,
        }
    };
    let (lo, hi) = cfg.working_interval();
    let best = numeric::grid_max_refined(objective, lo, hi, cfg.action_grid_size(), cfg.refine_iters(), &[]);
    if best.value.is_nan() {
        return Err(ContractError::Numerical("principal objective is not evaluable on the working interval".into()));
    }
    let boundary_flag = boundary_check(objective, best.x, lo, hi, "action")?;
    let a_e = best.x;
    let u_e = t * cost.eval_deriv(a_e)?;
    Ok(StackelbergSolution {
        u_e,
        a_e,
        value: principal_utility(rho, u_e, a_e)?,
        boundary_flag,
        grid_meta: SolverGrid {
            variable: "a",
            lo,
            hi,
            grid_size: cfg.action_grid_size(),
            refine_iters: cfg.refine_iters(),
        },
    })
}

/// Incentives for which every type's argument `u / theta` lies in `U`,
/// restricted to `[theta_min phi'(a_min), theta_max phi'(a_max)]`.
pub fn ex_ante_incentive_range(cfg: &ContractConfig, prior: &TypePrior) -> Result<(f64, f64)> {
    let cost = cfg.cost();
    let (a_min, a_max) = cfg.working_interval();
    let (t_min, t_max) = (prior.thetas[0], prior.thetas[prior.thetas.len() - 1]);
    let (d_lo, d_hi) = cost.incentive_range();
    let lo = (t_min * cost.eval_deriv(a_min)?).max(t_max * d_lo);
    let hi = (t_max * cost.eval_deriv(a_max)?).min(t_min * d_hi);
    if !(lo < hi) {
        return Err(ContractError::Config(format!("no feasible incentive for every type (range [{lo}, {hi}])")));
    }
    Ok((lo, hi))
}

/// Maximizes the prior-weighted principal utility over one incentive `u`.
///
/// Each type's response is clamped to the working interval; types are
/// evaluated in parallel and summed in support order.
pub fn solve_ex_ante(cfg: &ContractConfig, rho: &PrincipalBenefit, prior: &TypePrior) -> Result<ExAnteSolution> {
    rho.validate()?;
    let (u_lo, u_hi) = ex_ante_incentive_range(cfg, prior)?;
    let (a_min, a_max) = cfg.working_interval();
    let cost = cfg.cost();
    let response = |u: f64, theta: f64| cost.inv_deriv(u / theta).map(|a| a.clamp(a_min, a_max));
    let expected = |u: f64| -> f64 {
        let terms: Vec<f64> = prior
            .thetas
            .par_iter()
            .zip(prior.weights.par_iter())
            .map(|(&t, &w)| match response(u, t).and_then(|a| principal_utility(rho, u, a)) {
                Ok(v) => w * v,
                Err(_) => f64::NAN,
            })
            .collect();
        terms.iter().sum()
    };
    let best = numeric::grid_max_refined(expected, u_lo, u_hi, cfg.action_grid_size(), cfg.refine_iters(), &[]);
    if best.value.is_nan() {
        return Err(ContractError::Numerical("expected principal utility is not evaluable".into()));
    }
    let boundary_flag = boundary_check(expected, best.x, u_lo, u_hi, "incentive")?;
    let a_e = prior
        .support()
        .map(|(theta, weight)| Ok(TypeResponse { theta, weight, action: response(best.x, theta)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExAnteSolution {
        u_e: best.x,
        a_e,
        value: best.value,
        boundary_flag,
        grid_meta: SolverGrid {
            variable: "u",
            lo: u_lo,
            hi: u_hi,
            grid_size: cfg.action_grid_size(),
            refine_iters: cfg.refine_iters(),
        },
    })
}
