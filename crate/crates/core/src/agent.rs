//! The agent's side of the contract: stage utilities, best responses,
//! cumulative utilities and brute-force deviation search.
//!
//! Deviation search is the definition-level oracle for truthful play: it
//! scans first-stage actions over the working interval and reports how much
//! a non-myopic agent can gain over playing his myopic best response.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::{AdjustmentFunction, ConsistencyCurve};
use crate::cost_model::CostModel;
use crate::error::{ContractError, Result};
use crate::incentive::IncentiveFunction;
use crate::numeric::{self, Argmax};

/// Utility gain below which a deviation counts as grid noise.
pub const GAIN_TOLERANCE: f64 = 1e-7;

/// Default working interval for costs defined on the positive half-line.
pub const DEFAULT_WORKING_INTERVAL: (f64, f64) = (1e-3, 10.0);

pub const DEFAULT_GRID_SIZE: usize = 1024;
pub const DEFAULT_REFINE_ITERS: usize = 80;
pub const MIN_GRID_SIZE: usize = 64;

/// The agent's private cost multiplier `theta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentType(f64);

impl AgentType {
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 0.0 {
            Ok(Self(theta))
        } else {
            Err(ContractError::Domain(format!("agent type must be positive, got {theta}")))
        }
    }

    pub fn theta(self) -> f64 {
        self.0
    }
}

/// First-stage incentive, cost model and the numerical grid used by every
/// search.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractConfig {
    u1: f64,
    cost: CostModel,
    working_interval: (f64, f64),
    action_grid_size: usize,
    refine_iters: usize,
}

impl ContractConfig {
    /// Uses the default working interval, or the table range for tabulated costs.
    pub fn new(cost: CostModel, u1: f64) -> Result<Self> {
        let working_interval = if cost.is_tabulated() { cost.action_range() } else { DEFAULT_WORKING_INTERVAL };
        let cfg = Self {
            u1,
            cost,
            working_interval,
            action_grid_size: DEFAULT_GRID_SIZE,
            refine_iters: DEFAULT_REFINE_ITERS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_interval(mut self, a_min: f64, a_max: f64) -> Result<Self> {
        self.working_interval = (a_min, a_max);
        self.validate()?;
        Ok(self)
    }

    pub fn with_grid_size(mut self, n: usize) -> Result<Self> {
        self.action_grid_size = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_refine_iters(mut self, iters: usize) -> Self {
        self.refine_iters = iters;
        self
    }

    pub fn with_u1(mut self, u1: f64) -> Result<Self> {
        self.u1 = u1;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        self.cost
            .check_incentive(self.u1)
            .map_err(|e| ContractError::Config(format!("u1: {e}")))?;
        let (lo, hi) = self.working_interval;
        if !(lo < hi) {
            return Err(ContractError::Config(format!("working interval [{lo}, {hi}] is empty")));
        }
        let (dlo, dhi) = self.cost.action_range();
        if !(lo > dlo || (lo == dlo && self.cost.is_tabulated())) || hi > dhi || !hi.is_finite() {
            return Err(ContractError::Config(format!(
                "working interval [{lo}, {hi}] must lie inside the action domain of {}",
                self.cost.label()
            )));
        }
        if self.action_grid_size < MIN_GRID_SIZE {
            return Err(ContractError::Config(format!(
                "action grid size {} is below the minimum {MIN_GRID_SIZE}",
                self.action_grid_size
            )));
        }
        Ok(())
    }

    pub fn u1(&self) -> f64 {
        self.u1
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn working_interval(&self) -> (f64, f64) {
        self.working_interval
    }

    pub fn action_grid_size(&self) -> usize {
        self.action_grid_size
    }

    pub fn refine_iters(&self) -> usize {
        self.refine_iters
    }

    pub fn grid_meta(&self) -> GridMeta {
        let (a_min, a_max) = self.working_interval;
        GridMeta {
            a_min,
            a_max,
            grid_size: self.action_grid_size,
            refine_iters: self.refine_iters,
            gain_tolerance: GAIN_TOLERANCE,
            scope: format!("truthful on [{a_min}, {a_max}]"),
        }
    }

    fn contains(&self, a: f64) -> bool {
        let (lo, hi) = self.working_interval;
        a >= lo && a <= hi
    }
}

/// Where and how finely a search looked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub a_min: f64,
    pub a_max: f64,
    pub grid_size: usize,
    pub refine_iters: usize,
    pub gain_tolerance: f64,
    /// Verdicts only certify the working interval.
    pub scope: String,
}

/// Outcome of a brute-force deviation search for one agent type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub theta: f64,
    pub truthful_action: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truthful_second_action: Option<f64>,
    pub truthful_value: f64,
    pub best_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_deviation_second: Option<f64>,
    pub best_value: f64,
    pub gain: f64,
    pub truthful: bool,
    pub grid: GridMeta,
}

/// `u a - theta phi(a)`.
pub fn stage_utility(cfg: &ContractConfig, u: f64, a: f64, theta: AgentType) -> Result<f64> {
    if !(u.is_finite() && u > 0.0) {
        return Err(ContractError::Domain(format!("incentive {u} must be positive and finite")));
    }
    Ok(u * a - theta.0 * cfg.cost.eval_cost(a)?)
}

/// The unique maximizer `(phi')^{-1}(u / theta)` of the stage utility.
pub fn best_response(cfg: &ContractConfig, u: f64, theta: AgentType) -> Result<f64> {
    cfg.cost.inv_deriv(u / theta.0)
}

/// Stage utility at the best response, `theta phi*(u / theta)`.
pub fn best_response_value(cfg: &ContractConfig, u: f64, theta: AgentType) -> Result<f64> {
    Ok(theta.0 * cfg.cost.conjugate(u / theta.0)?)
}

/// Cumulative utility when the second-stage action is unobserved and the
/// agent best-responds to `u2(a1)`.
pub fn cumulative_utility_mh(cfg: &ContractConfig, a1: f64, u2: &IncentiveFunction, theta: AgentType) -> Result<f64> {
    Ok(stage_utility(cfg, cfg.u1, a1, theta)? + best_response_value(cfg, u2.eval(a1), theta)?)
}

/// Cumulative utility with an end-of-game adjustment; `-inf` when the
/// adjustment is infinite.
pub fn cumulative_utility_adj(
    cfg: &ContractConfig,
    a1: f64,
    a2: f64,
    u2: &IncentiveFunction,
    pi: &AdjustmentFunction,
    theta: AgentType,
) -> Result<f64> {
    let curve = ConsistencyCurve::new(cfg, u2);
    let penalty = pi.penalty(curve.eval(a1)?, a1, a2)?;
    if penalty == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let u2a = u2.eval(a1);
    Ok(stage_utility(cfg, cfg.u1, a1, theta)? + stage_utility(cfg, u2a, a2, theta)? - penalty)
}

fn truthful_first_action(cfg: &ContractConfig, theta: AgentType) -> Result<f64> {
    let a = best_response(cfg, cfg.u1, theta)?;
    if !cfg.contains(a) {
        let (lo, hi) = cfg.working_interval;
        return Err(ContractError::Config(format!(
            "truthful action {a} of type {} lies outside the working interval [{lo}, {hi}]",
            theta.0
        )));
    }
    Ok(a)
}

fn finite_or_nan(v: Result<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn checked_best(best: Argmax) -> Result<Argmax> {
    if best.value.is_nan() {
        Err(ContractError::Numerical("deviation search found no evaluable action".into()))
    } else {
        Ok(best)
    }
}

/// Scans first-stage deviations when the second stage is unobserved.
///
/// Discontinuities and kinks of `u2` and the truthful action itself are
/// probed exactly alongside the uniform grid.
pub fn deviation_search_mh(cfg: &ContractConfig, u2: &IncentiveFunction, theta: AgentType) -> Result<DeviationReport> {
    let a_truth = truthful_first_action(cfg, theta)?;
    let truthful_value = cumulative_utility_mh(cfg, a_truth, u2, theta)?;
    let mut extra = u2.breakpoints();
    extra.push(a_truth);
    let (lo, hi) = cfg.working_interval;
    let best = numeric::grid_max_refined(
        |a| finite_or_nan(cumulative_utility_mh(cfg, a, u2, theta)),
        lo,
        hi,
        cfg.action_grid_size,
        cfg.refine_iters,
        &extra,
    );
    let best = checked_best(best)?;
    Ok(report(cfg, theta, (a_truth, None), truthful_value, (best.x, None), best.value))
}

fn report(
    cfg: &ContractConfig,
    theta: AgentType,
    truthful: (f64, Option<f64>),
    truthful_value: f64,
    best: (f64, Option<f64>),
    best_value: f64,
) -> DeviationReport {
    let gain = best_value - truthful_value;
    DeviationReport {
        theta: theta.0,
        truthful_action: truthful.0,
        truthful_second_action: truthful.1,
        truthful_value,
        best_deviation: best.0,
        best_deviation_second: best.1,
        best_value,
        gain,
        truthful: gain <= GAIN_TOLERANCE,
        grid: cfg.grid_meta(),
    }
}

/// Scans deviations `(a1, a2)` under an adjustment function.
///
/// With the extreme penalty only consistent pairs `(a1, c(a1))` are
/// feasible, so the scan is one-dimensional along the consistency curve.
/// A finite cap makes every pair feasible and the scan covers the full
/// `grid x grid` square plus the curve, refined coordinate-wise.
pub fn deviation_search_adj(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    pi: &AdjustmentFunction,
    theta: AgentType,
) -> Result<DeviationReport> {
    let a_truth = truthful_first_action(cfg, theta)?;
    let curve = ConsistencyCurve::new(cfg, u2);
    let c_truth = curve.eval(a_truth)?;
    let truthful_value = cumulative_utility_adj(cfg, a_truth, c_truth, u2, pi, theta)?;

    let on_curve = |a1: f64| -> f64 {
        finite_or_nan(curve.eval(a1).and_then(|c| cumulative_utility_adj(cfg, a1, c, u2, pi, theta)))
    };
    let mut extra = u2.breakpoints();
    extra.push(a_truth);
    let (lo, hi) = cfg.working_interval;
    let n = cfg.action_grid_size;
    let iters = cfg.refine_iters;
    let along = checked_best(numeric::grid_max_refined(on_curve, lo, hi, n, iters, &extra))?;
    let along_pair = (along.x, curve.eval(along.x)?);

    let (best_pair, best_value) = match pi {
        AdjustmentFunction::ExtremeConsistency { .. } => (along_pair, along.value),
        AdjustmentFunction::FinitePenalty { .. } => {
            let value = |a1: f64, a2: f64| finite_or_nan(cumulative_utility_adj(cfg, a1, a2, u2, pi, theta));
            let mut rows = numeric::linspace(lo, hi, n);
            rows.extend(extra.iter().copied().filter(|x| cfg.contains(*x)));
            rows.sort_by(f64::total_cmp);
            rows.dedup();
            let cols = numeric::linspace(lo, hi, n);

            let row_best: Vec<(f64, f64, f64)> = rows
                .par_iter()
                .map(|&a1| {
                    let vals: Vec<f64> = cols.iter().map(|&a2| value(a1, a2)).collect();
                    match numeric::argmax_index(&vals) {
                        Some(j) => (vals[j], a1, cols[j]),
                        None => (f64::NAN, a1, f64::NAN),
                    }
                })
                .collect();
            let mut best = (along.value, along_pair.0, along_pair.1);
            for cand in row_best {
                if cand.0 > best.0 || (cand.0 == best.0 && (cand.1, cand.2) < (best.1, best.2)) {
                    best = cand;
                }
            }
            // coordinate-wise golden refinement of the grid winner
            let (mut v, mut a1, mut a2) = best;
            if (v, a1, a2) != (along.value, along_pair.0, along_pair.1) {
                let cells = |nodes: &[f64], x: f64| -> Vec<(f64, f64)> {
                    let i = nodes.partition_point(|&p| p < x);
                    let mut out = Vec::new();
                    if i > 0 && i < nodes.len() {
                        out.push((nodes[i - 1], nodes[i]));
                    }
                    if i + 1 < nodes.len() {
                        out.push((nodes[i], nodes[i + 1]));
                    }
                    out
                };
                for (l, r) in cells(&cols, a2) {
                    let (x, fx) = numeric::golden_max(|y| value(a1, y), l, r, iters);
                    if fx > v {
                        v = fx;
                        a2 = x;
                    }
                }
                for (l, r) in cells(&rows, a1) {
                    let (x, fx) = numeric::golden_max(|y| value(y, a2), l, r, iters);
                    if fx > v {
                        v = fx;
                        a1 = x;
                    }
                }
            }
            ((a1, a2), v)
        }
    };
    if best_value.is_nan() {
        return Err(ContractError::Numerical("deviation search found no evaluable pair".into()));
    }
    // the truthful pair is always feasible
    let (best_pair, best_value) = if truthful_value > best_value {
        ((a_truth, c_truth), truthful_value)
    } else {
        (best_pair, best_value)
    };
    Ok(report(
        cfg,
        theta,
        (a_truth, Some(c_truth)),
        truthful_value,
        (best_pair.0, Some(best_pair.1)),
        best_value,
    ))
}
