//! Adjustment functions that observe both actions.
//!
//! Under truthful play the two actions satisfy
//! `phi'(a1) / u1 = phi'(a2) / u2(a1)`, which pins the second action to the
//! consistency curve `c(a1) = (phi')^{-1}(u2(a1) phi'(a1) / u1)`. An
//! adjustment charges a fee `f(a1)` on the curve and an off-curve penalty
//! elsewhere. With an infinite off-curve penalty, truthful play is induced
//! exactly when
//!
//! ```text
//! f'(a1) = g'(a1) - u1 (phi o c)'(a1) / phi'(a1),   g(a1) = u2(a1) c(a1)
//! ```
//!
//! [`build_truthful_adjustment`] integrates that ODE with composite Simpson
//! panels; [`verify_adjustment`] checks the resulting inequality pairwise and
//! against the deviation search; [`finite_penalty_breakdown`] shows that any
//! finite off-curve cap is eventually beaten by an inconsistent second-stage
//! action.

mod fee;

pub use fee::{FeeInterpolation, FeeTable};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentType, ContractConfig, DeviationReport, GAIN_TOLERANCE};
use crate::error::{ContractError, Result};
use crate::incentive::IncentiveFunction;
use crate::numeric;

/// Relative width of the band treated as "on the curve".
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-6;

/// One-sided limit selector for derivatives at kinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The curve `a1 -> c(a1)` of second-stage actions consistent with the type
/// portrayed by `a1`.
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyCurve<'a> {
    cfg: &'a ContractConfig,
    u2: &'a IncentiveFunction,
}

impl<'a> ConsistencyCurve<'a> {
    pub fn new(cfg: &'a ContractConfig, u2: &'a IncentiveFunction) -> Self {
        Self { cfg, u2 }
    }

    pub fn eval(&self, a1: f64) -> Result<f64> {
        let cost = self.cfg.cost();
        let target = self.u2.eval(a1) * cost.eval_deriv(a1)? / self.cfg.u1();
        cost.inv_deriv(target)
    }

    /// One-sided `c'(a1)` from implicit differentiation of
    /// `u1 phi'(c) = u2 phi'(a1)`.
    pub fn derivative(&self, a1: f64, side: Side) -> Result<f64> {
        let cost = self.cfg.cost();
        let du2 = match side {
            Side::Left => self.u2.derivative_left(a1),
            Side::Right => self.u2.derivative_right(a1),
        }
        .ok_or_else(|| ContractError::Numerical(format!("incentive is not differentiable at {a1}")))?;
        let c = self.eval(a1)?;
        let num = du2 * cost.eval_deriv(a1)? + self.u2.eval(a1) * cost.eval_second_deriv(a1)?;
        let den = self.cfg.u1() * cost.eval_second_deriv(c)?;
        let v = num / den;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ContractError::Numerical(format!("curve derivative is not finite at {a1}")))
        }
    }
}

/// `c(a1)`.
pub fn consistency_curve(cfg: &ContractConfig, u2: &IncentiveFunction, a1: f64) -> Result<f64> {
    ConsistencyCurve::new(cfg, u2).eval(a1)
}

/// Second-stage payment along the curve, `g(a1) = u2(a1) c(a1)`.
pub fn second_stage_revenue(cfg: &ContractConfig, u2: &IncentiveFunction, a1: f64) -> Result<f64> {
    Ok(u2.eval(a1) * consistency_curve(cfg, u2, a1)?)
}

/// Right-hand side of the fee ODE, `g'(a1) - u1 (phi o c)'(a1) / phi'(a1)`.
pub fn fee_slope(cfg: &ContractConfig, u2: &IncentiveFunction, a1: f64, side: Side) -> Result<f64> {
    let curve = ConsistencyCurve::new(cfg, u2);
    let cost = cfg.cost();
    let c = curve.eval(a1)?;
    let dc = curve.derivative(a1, side)?;
    let du2 = match side {
        Side::Left => u2.derivative_left(a1),
        Side::Right => u2.derivative_right(a1),
    }
    .ok_or_else(|| ContractError::Numerical(format!("incentive is not differentiable at {a1}")))?;
    let dg = du2 * c + u2.eval(a1) * dc;
    let dphi_c = cost.eval_deriv(c)? * dc;
    let v = dg - cfg.u1() * dphi_c / cost.eval_deriv(a1)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ContractError::Numerical(format!("fee slope is not finite at {a1}")))
    }
}

/// An end-of-game transfer `pi(a1, a2)` charged to the agent.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjustmentFunction {
    /// `f(a1)` on the curve, `+inf` off it.
    ExtremeConsistency { fee: FeeTable, consistency_tol: f64 },
    /// `f(a1)` on the curve, the finite `cap` off it.
    FinitePenalty { cap: f64, fee: FeeTable, consistency_tol: f64 },
}

impl AdjustmentFunction {
    pub fn extreme(fee: FeeTable) -> Self {
        Self::ExtremeConsistency { fee, consistency_tol: DEFAULT_CONSISTENCY_TOL }
    }

    pub fn finite(cap: f64, fee: FeeTable) -> Result<Self> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(ContractError::Range(format!("penalty cap must be finite and non-negative, got {cap}")));
        }
        Ok(Self::FinitePenalty { cap, fee, consistency_tol: DEFAULT_CONSISTENCY_TOL })
    }

    pub fn fee(&self) -> &FeeTable {
        match self {
            Self::ExtremeConsistency { fee, .. } | Self::FinitePenalty { fee, .. } => fee,
        }
    }

    pub fn consistency_tol(&self) -> f64 {
        match self {
            Self::ExtremeConsistency { consistency_tol, .. } | Self::FinitePenalty { consistency_tol, .. } => {
                *consistency_tol
            }
        }
    }

    /// `|a2 - c| <= tol (1 + |c|)`.
    pub fn is_consistent(&self, curve_value: f64, a2: f64) -> bool {
        (a2 - curve_value).abs() <= self.consistency_tol() * (1.0 + curve_value.abs())
    }

    /// `pi(a1, a2)` given `c(a1)`; `+inf` encodes the extreme penalty.
    pub fn penalty(&self, curve_value: f64, a1: f64, a2: f64) -> Result<f64> {
        if self.is_consistent(curve_value, a2) {
            return self.fee().eval(a1);
        }
        Ok(match self {
            Self::ExtremeConsistency { .. } => f64::INFINITY,
            Self::FinitePenalty { cap, .. } => *cap,
        })
    }

    pub fn metadata(&self) -> AdjustmentMetadata {
        let fee = self.fee();
        AdjustmentMetadata {
            variant: match self {
                Self::ExtremeConsistency { .. } => AdjustmentVariant::ExtremeConsistency,
                Self::FinitePenalty { .. } => AdjustmentVariant::FinitePenalty,
            },
            consistency_tol: self.consistency_tol(),
            cap: match self {
                Self::FinitePenalty { cap, .. } => Some(*cap),
                _ => None,
            },
            anchor: fee.anchor(),
            interpolation: fee.interpolation(),
            nodes: fee.nodes().len(),
        }
    }

    /// Reassembles an adjustment from its JSON metadata and fee table.
    pub fn from_parts(meta: &AdjustmentMetadata, fee: FeeTable) -> Result<Self> {
        if fee.anchor() != meta.anchor {
            return Err(ContractError::Config("fee table anchor disagrees with metadata".into()));
        }
        Ok(match meta.variant {
            AdjustmentVariant::ExtremeConsistency => {
                Self::ExtremeConsistency { fee, consistency_tol: meta.consistency_tol }
            }
            AdjustmentVariant::FinitePenalty => {
                let cap = meta
                    .cap
                    .ok_or_else(|| ContractError::Config("finite-penalty metadata without a cap".into()))?;
                Self::FinitePenalty { cap, fee, consistency_tol: meta.consistency_tol }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentVariant {
    ExtremeConsistency,
    FinitePenalty,
}

/// JSON sidecar written next to a fee CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustmentMetadata {
    pub variant: AdjustmentVariant,
    pub consistency_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    pub anchor: f64,
    pub interpolation: FeeInterpolation,
    pub nodes: usize,
}

/// Integrates the fee ODE from `a_ref` (default: the working-interval
/// midpoint) and returns the extreme-consistency adjustment.
///
/// The grid is the uniform action grid plus `a_ref` and every kink of `u2`,
/// so each Simpson panel sees a smooth integrand and `f(a_ref) = 0` holds at
/// a node.
pub fn build_truthful_adjustment(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    a_ref: Option<f64>,
) -> Result<AdjustmentFunction> {
    if !u2.is_differentiable() {
        return Err(ContractError::Numerical(
            "fee construction needs a differentiable incentive; step incentives jump".into(),
        ));
    }
    let (lo, hi) = cfg.working_interval();
    let a_ref = a_ref.unwrap_or(0.5 * (lo + hi));
    if !(a_ref >= lo && a_ref <= hi) {
        return Err(ContractError::Config(format!("anchor {a_ref} outside the working interval [{lo}, {hi}]")));
    }
    let mut nodes = numeric::linspace(lo, hi, cfg.action_grid_size());
    nodes.push(a_ref);
    nodes.extend(u2.kinks().into_iter().filter(|k| *k > lo && *k < hi));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let slopes: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&a| Ok((fee_slope(cfg, u2, a, Side::Left)?, fee_slope(cfg, u2, a, Side::Right)?)))
        .collect::<Result<_>>()?;

    let mut cumulative = Vec::with_capacity(nodes.len());
    cumulative.push(0.0);
    for k in 0..nodes.len() - 1 {
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let mid = fee_slope(cfg, u2, 0.5 * (x0 + x1), Side::Right)?;
        let panel = (x1 - x0) / 6.0 * (slopes[k].1 + 4.0 * mid + slopes[k + 1].0);
        cumulative.push(cumulative[k] + panel);
    }
    let i_ref = nodes.iter().position(|&x| x == a_ref).expect("anchor is a node");
    let base = cumulative[i_ref];
    let f: Vec<f64> = cumulative.iter().map(|c| c - base).collect();
    let (left, right): (Vec<f64>, Vec<f64>) = slopes.into_iter().unzip();
    Ok(AdjustmentFunction::extreme(FeeTable::hermite(nodes, f, left, right, a_ref)?))
}

/// Truthfulness margin along the curve for true action `a1` and deviation `a_hat`:
///
/// `f(a_hat) - f(a1) - g(a_hat) + g(a1)
///   + u1/phi'(a1) [D(a_hat, a1) + phi(c(a_hat)) - phi(c(a1))]`.
///
/// Non-negative iff the deviation does not pay.
pub fn adjustment_margin(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    fee: &FeeTable,
    a1: f64,
    a_hat: f64,
) -> Result<f64> {
    if a1 == a_hat {
        return Ok(0.0);
    }
    let cost = cfg.cost();
    let curve = ConsistencyCurve::new(cfg, u2);
    let (c1, c_hat) = (curve.eval(a1)?, curve.eval(a_hat)?);
    let df = fee.eval(a_hat)? - fee.eval(a1)?;
    let dg = u2.eval(a_hat) * c_hat - u2.eval(a1) * c1;
    let bracket = cost.bregman(a_hat, a1)? + cost.eval_cost(c_hat)? - cost.eval_cost(c1)?;
    Ok(df - dg + cfg.u1() / cost.eval_deriv(a1)? * bracket)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeVerification {
    pub theta: f64,
    pub truthful_action: f64,
    pub worst_deviation: f64,
    pub worst_margin: f64,
    pub holds: bool,
    pub search: DeviationReport,
    /// Inequality verdict and deviation-search verdict coincide.
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustmentVerification {
    pub per_type: Vec<TypeVerification>,
    pub worst_margin: f64,
    pub holds: bool,
    pub all_agree: bool,
    /// Interior kinks of `u2`, where the fee ODE only holds one-sidedly.
    pub assumption_boundary_points: Vec<f64>,
    pub tolerance: f64,
}

/// Checks the pairwise truthfulness inequality for each sampled type and
/// cross-checks it with [`agent::deviation_search_adj`].
pub fn verify_adjustment(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    adj: &AdjustmentFunction,
    theta_samples: &[f64],
) -> Result<AdjustmentVerification> {
    let fee = match adj {
        AdjustmentFunction::ExtremeConsistency { fee, .. } => fee,
        AdjustmentFunction::FinitePenalty { .. } => {
            return Err(ContractError::Domain(
                "pairwise verification applies to extreme-consistency adjustments only".into(),
            ))
        }
    };
    let (lo, hi) = cfg.working_interval();
    let kinks: Vec<f64> = u2.kinks().into_iter().filter(|k| *k > lo && *k < hi).collect();
    let per_type = theta_samples
        .par_iter()
        .map(|&t| {
            let theta = AgentType::new(t)?;
            let search = agent::deviation_search_adj(cfg, u2, adj, theta)?;
            let a1 = search.truthful_action;
            let mut grid = numeric::linspace(lo, hi, cfg.action_grid_size());
            grid.extend(kinks.iter().copied());
            grid.push(a1);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut worst = (f64::INFINITY, a1);
            for &a_hat in &grid {
                let m = adjustment_margin(cfg, u2, fee, a1, a_hat)?;
                if m < worst.0 {
                    worst = (m, a_hat);
                }
            }
            let holds = worst.0 >= -GAIN_TOLERANCE;
            Ok(TypeVerification {
                theta: t,
                truthful_action: a1,
                worst_deviation: worst.1,
                worst_margin: worst.0,
                holds,
                agree: holds == search.truthful,
                search,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_margin = per_type.iter().map(|v| v.worst_margin).fold(f64::INFINITY, f64::min);
    Ok(AdjustmentVerification {
        holds: per_type.iter().all(|v| v.holds),
        all_agree: per_type.iter().all(|v| v.agree),
        worst_margin,
        per_type,
        assumption_boundary_points: kinks,
        tolerance: GAIN_TOLERANCE,
    })
}

/// Best inconsistent second-stage deviation for one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyScanPoint {
    pub theta: f64,
    pub a1: f64,
    pub consistent_action: f64,
    pub deviation_action: f64,
    /// Utility of the inconsistent pair minus that of the consistent pair.
    pub gain: f64,
}

/// First scanned type for which a finite cap fails to enforce consistency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyBreakdown {
    pub theta: f64,
    pub scan_index: usize,
    pub a1: f64,
    pub consistent_action: f64,
    pub deviation_action: f64,
    pub gain: f64,
    /// Type above which the reported pair becomes profitable:
    /// `(M - f(a1) + u2(a1)(c - a2)) / (phi(c) - phi(a2))`.
    pub closed_form_theta: f64,
}

fn check_scan(cap: f64, theta_scan: &[f64]) -> Result<()> {
    if !(cap.is_finite() && cap >= 0.0) {
        return Err(ContractError::Range(format!("penalty cap must be finite and non-negative, got {cap}")));
    }
    if theta_scan.iter().any(|t| !(t.is_finite() && *t > 0.0)) || theta_scan.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ContractError::Range("theta scan must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// For each type, the most profitable pair `(a1, a2)` with `a2` below the
/// curve value `c(a1)`, measured against consistent play at the same `a1`.
///
/// Gain is `theta [phi(c) - phi(a2)] - u2(a1)(c - a2) - M + f(a1)`, affine
/// and increasing in `theta` for each pair, so the scan is monotone.
pub fn penalty_scan(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    fee: &FeeTable,
    cap: f64,
    theta_scan: &[f64],
) -> Result<Vec<PenaltyScanPoint>> {
    check_scan(cap, theta_scan)?;
    let cost = cfg.cost();
    let curve = ConsistencyCurve::new(cfg, u2);
    let (lo, hi) = cfg.working_interval();
    let n = cfg.action_grid_size();
    let tol = DEFAULT_CONSISTENCY_TOL;

    struct Row {
        a1: f64,
        c: f64,
        phi_c: f64,
        u2: f64,
        fee: f64,
    }
    let mut row_nodes = numeric::linspace(lo, hi, n);
    row_nodes.extend(u2.breakpoints().into_iter().filter(|x| *x > lo && *x < hi));
    row_nodes.sort_by(f64::total_cmp);
    row_nodes.dedup();
    let rows: Vec<Row> = row_nodes
        .iter()
        .map(|&a1| {
            let c = curve.eval(a1)?;
            Ok(Row { a1, c, phi_c: cost.eval_cost(c)?, u2: u2.eval(a1), fee: fee.eval(a1)? })
        })
        .collect::<Result<_>>()?;
    let cols = numeric::linspace(lo, hi, n);
    let phi_cols: Vec<f64> = cols.iter().map(|&a| cost.eval_cost(a)).collect::<Result<_>>()?;

    theta_scan
        .par_iter()
        .map(|&theta| {
            let gain_at = |r: &Row, a2: f64, phi_a2: f64| theta * (r.phi_c - phi_a2) - r.u2 * (r.c - a2) - cap + r.fee;
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, r) in rows.iter().enumerate() {
                let limit = r.c - tol * (1.0 + r.c.abs());
                for (j, (&a2, &phi_a2)) in cols.iter().zip(&phi_cols).enumerate() {
                    if a2 >= limit {
                        break;
                    }
                    let g = gain_at(r, a2, phi_a2);
                    if best.is_none_or(|b| g > b.0) {
                        best = Some((g, i, j));
                    }
                }
            }
            let Some((mut g, i, j)) = best else {
                return Ok(PenaltyScanPoint {
                    theta,
                    a1: f64::NAN,
                    consistent_action: f64::NAN,
                    deviation_action: f64::NAN,
                    gain: f64::NEG_INFINITY,
                });
            };
            let r = &rows[i];
            let limit = r.c - tol * (1.0 + r.c.abs());
            let mut a2 = cols[j];
            // the gain is concave in a2: polish inside the neighbouring cells
            let objective = |x: f64| match cost.eval_cost(x) {
                Ok(p) if x < limit => gain_at(r, x, p),
                _ => f64::NEG_INFINITY,
            };
            let lo_cell = if j > 0 { cols[j - 1] } else { cols[0] };
            let hi_cell = if j + 1 < cols.len() { cols[j + 1].min(limit) } else { cols[j] };
            if hi_cell > lo_cell {
                let (x, fx) = numeric::golden_max(objective, lo_cell, hi_cell, cfg.refine_iters());
                if fx > g {
                    g = fx;
                    a2 = x;
                }
            }
            Ok(PenaltyScanPoint { theta, a1: r.a1, consistent_action: r.c, deviation_action: a2, gain: g })
        })
        .collect()
}

/// Smallest scanned type at which an inconsistent second-stage action beats
/// consistent play by more than [`GAIN_TOLERANCE`] under the finite cap.
pub fn finite_penalty_breakdown(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    fee: &FeeTable,
    cap: f64,
    theta_scan: &[f64],
) -> Result<Option<PenaltyBreakdown>> {
    let scan = penalty_scan(cfg, u2, fee, cap, theta_scan)?;
    let cost = cfg.cost();
    for (k, p) in scan.iter().enumerate() {
        if p.gain > GAIN_TOLERANCE {
            let dphi = cost.eval_cost(p.consistent_action)? - cost.eval_cost(p.deviation_action)?;
            let numer = cap - fee.eval(p.a1)? + u2.eval(p.a1) * (p.consistent_action - p.deviation_action);
            return Ok(Some(PenaltyBreakdown {
                theta: p.theta,
                scan_index: k,
                a1: p.a1,
                consistent_action: p.consistent_action,
                deviation_action: p.deviation_action,
                gain: p.gain,
                closed_form_theta: numer / dphi,
            }));
        }
    }
    Ok(None)
}
