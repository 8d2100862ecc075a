//! Analytic truthfulness tests.
//!
//! With a continuum of types, a second-stage incentive `u2` induces truthful
//! first-stage play iff for every pair of actions
//!
//! ```text
//! phi*(u2(a_hat) phi'(a) / u1) - phi*(u2(a) phi'(a) / u1) <= D(a_hat, a)
//! ```
//!
//! which on any grid forces `u2` to be constant. With two types a step
//! incentive can still separate them, subject to a closed-form bound on the
//! gap between its two levels.

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{AgentType, ContractConfig};
use crate::cost_model::CostModel;
use crate::error::{ContractError, Result};
use crate::incentive::IncentiveFunction;
use crate::numeric;

pub const DEFAULT_BREGMAN_GRID: usize = 256;
pub const BREGMAN_TOLERANCE: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Truthful,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstPair {
    pub a: f64,
    pub a_hat: f64,
    /// `D(a_hat, a)` minus the conjugate difference; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BregmanGridMeta {
    pub points: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub spacing: &'static str,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BregmanReport {
    pub verdict: Verdict,
    pub worst_pair: WorstPair,
    pub grid_meta: BregmanGridMeta,
}

impl BregmanReport {
    pub fn is_truthful(&self) -> bool {
        self.verdict == Verdict::Truthful
    }
}

/// The default pair-scan grid: 256 log-spaced points over the working
/// interval (uniform when the interval starts at zero).
pub fn default_bregman_grid(cfg: &ContractConfig) -> Vec<f64> {
    let (lo, hi) = cfg.working_interval();
    if lo > 0.0 {
        numeric::logspace(lo, hi, DEFAULT_BREGMAN_GRID)
    } else {
        numeric::linspace(lo, hi, DEFAULT_BREGMAN_GRID)
    }
}

/// Scans every ordered pair of `grid` (default [`default_bregman_grid`]).
///
/// The scan is `O(n^2)`; rows run in parallel and the worst pair is reduced
/// in row order, so ties go to the lexicographically smallest `(a, a_hat)`.
pub fn check_bregman_truthful(
    cfg: &ContractConfig,
    u2: &IncentiveFunction,
    grid: Option<&[f64]>,
) -> Result<BregmanReport> {
    let owned;
    let (grid, spacing) = match grid {
        Some(g) => (g, "custom"),
        None => {
            owned = default_bregman_grid(cfg);
            let spacing = if cfg.working_interval().0 > 0.0 { "log" } else { "uniform" };
            (owned.as_slice(), spacing)
        }
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ContractError::Config("truthfulness grid must be non-empty and strictly increasing".into()));
    }
    let cost = cfg.cost();
    let u1 = cfg.u1();
    let levels: Vec<f64> = grid.iter().map(|&a| u2.eval(a)).collect();
    let rows: Vec<WorstPair> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let p = cost.eval_deriv(a)? / u1;
            if !(p > 0.0) {
                return Err(ContractError::Domain(format!("phi'({a}) must be positive on the truthfulness grid")));
            }
            let base = cost.conjugate(levels[i] * p)?;
            let mut worst = WorstPair { a, a_hat: a, margin: 0.0 };
            for (j, &a_hat) in grid.iter().enumerate() {
                if j == i {
                    continue;
                }
                let lhs = cost.conjugate(levels[j] * p)? - base;
                let margin = cost.bregman(a_hat, a)? - lhs;
                if margin < worst.margin || (margin == worst.margin && a_hat < worst.a_hat) {
                    worst = WorstPair { a, a_hat, margin };
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let mut worst = rows[0];
    for r in &rows[1..] {
        if r.margin < worst.margin {
            worst = *r;
        }
    }
    Ok(BregmanReport {
        verdict: if worst.margin >= -BREGMAN_TOLERANCE { Verdict::Truthful } else { Verdict::Violated },
        worst_pair: worst,
        grid_meta: BregmanGridMeta {
            points: grid.len(),
            a_min: grid[0],
            a_max: grid[grid.len() - 1],
            spacing,
            tolerance: BREGMAN_TOLERANCE,
        },
    })
}

/// Which type receives the larger second-stage incentive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDirection {
    /// `u_L > u_H`: the efficient type is rewarded.
    LowGetsMore,
    /// `u_H > u_L`.
    HighGetsMore,
}

/// `[(phi')^{-1}(u1 / theta_H), (phi')^{-1}(u1 / theta_L)]`: the thresholds
/// lying between the two types' truthful first-stage actions.
pub fn step_threshold_range(cfg: &ContractConfig, theta_l: AgentType, theta_h: AgentType) -> Result<(f64, f64)> {
    if theta_l > theta_h {
        return Err(ContractError::Domain(format!(
            "low type {} must not exceed high type {}",
            theta_l.theta(),
            theta_h.theta()
        )));
    }
    let cost = cfg.cost();
    Ok((cost.inv_deriv(cfg.u1() / theta_h.theta())?, cost.inv_deriv(cfg.u1() / theta_l.theta())?))
}

/// Closed-form feasibility region of a two-level step at threshold `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFeasibility {
    pub t: f64,
    pub direction: StepDirection,
    pub theta_l: f64,
    pub theta_h: f64,
    /// The type whose deviation binds: `theta_H` for
    /// [`StepDirection::LowGetsMore`], `theta_L` otherwise.
    pub binding_theta: f64,
    pub threshold_range: (f64, f64),
    /// `phi(t) + phi*(u1 / theta) - u1 t / theta`, always non-negative.
    pub rhs_bound: f64,
    #[serde(skip)]
    cost: CostModel,
}

impl StepFeasibility {
    /// `phi*(u_big / theta) - phi*(u_small / theta)` for the direction's
    /// ordering of `(u_l, u_h)`.
    pub fn lhs(&self, u_l: f64, u_h: f64) -> Result<f64> {
        let (big, small) = self.order(u_l, u_h);
        let t = self.binding_theta;
        Ok(self.cost.conjugate(big / t)? - self.cost.conjugate(small / t)?)
    }

    fn order(&self, u_l: f64, u_h: f64) -> (f64, f64) {
        match self.direction {
            StepDirection::LowGetsMore => (u_l, u_h),
            StepDirection::HighGetsMore => (u_h, u_l),
        }
    }

    pub fn is_feasible(&self, u_l: f64, u_h: f64) -> Result<bool> {
        Ok(self.lhs(u_l, u_h)? <= self.rhs_bound + FEASIBILITY_TOL)
    }

    /// Largest level for the favoured type that stays feasible when the
    /// other type receives `u_small`; `None` if every level in `U` is
    /// feasible.
    pub fn boundary_incentive(&self, u_small: f64) -> Result<Option<f64>> {
        let theta = self.binding_theta;
        let cost = &self.cost;
        let target = cost.conjugate(u_small / theta)? + self.rhs_bound;
        let (_, u_cap) = cost.incentive_range();
        let cap = theta * u_cap;
        let g = |u: f64| cost.conjugate(u / theta).unwrap_or(f64::INFINITY);
        let mut hi = u_small.max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            if g(hi) >= target {
                break;
            }
            if hi >= cap {
                return Ok(None);
            }
            hi = (2.0 * hi).min(cap);
        }
        if g(hi) < target {
            return Ok(None);
        }
        numeric::bisect_increasing(g, target, u_small, hi, 1e-13 * (1.0 + hi))
            .map(Some)
            .ok_or_else(|| ContractError::Convergence("could not bracket the step feasibility boundary".into()))
    }
}

/// Feasibility bound for a step at threshold `t` in the given direction.
pub fn step_feasibility(
    cfg: &ContractConfig,
    theta_l: AgentType,
    theta_h: AgentType,
    t: f64,
    direction: StepDirection,
) -> Result<StepFeasibility> {
    let range = step_threshold_range(cfg, theta_l, theta_h)?;
    let slack = 1e-12 * (1.0 + range.1.abs());
    if !(t >= range.0 - slack && t <= range.1 + slack) {
        return Err(ContractError::Range(format!(
            "threshold {t} outside the admissible range [{}, {}]",
            range.0, range.1
        )));
    }
    let binding = match direction {
        StepDirection::LowGetsMore => theta_h.theta(),
        StepDirection::HighGetsMore => theta_l.theta(),
    };
    let cost = cfg.cost();
    let u = cfg.u1() / binding;
    let rhs = cost.eval_cost(t)? + cost.conjugate(u)? - u * t;
    Ok(StepFeasibility {
        t,
        direction,
        theta_l: theta_l.theta(),
        theta_h: theta_h.theta(),
        binding_theta: binding,
        threshold_range: range,
        // Fenchel-Young makes this non-negative up to rounding
        rhs_bound: rhs.max(0.0),
        cost: cost.clone(),
    })
}

/// The threshold in the range that maximizes `rhs_bound` for `direction`.
pub fn permissive_threshold(range: (f64, f64), direction: StepDirection) -> f64 {
    match direction {
        StepDirection::LowGetsMore => range.1,
        StepDirection::HighGetsMore => range.0,
    }
}

/// Outcome of [`design_step`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DesignOutcome {
    Feasible {
        incentive: IncentiveFunction,
        #[serde(skip_serializing_if = "Option::is_none")]
        feasibility: Option<StepFeasibility>,
    },
    Infeasible {
        requested: (f64, f64),
        feasibility: StepFeasibility,
        lhs: f64,
        /// Largest feasible level for the favoured type, the other held fixed.
        boundary_incentive: f64,
        max_feasible_gap: f64,
    },
}

impl DesignOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }
}

/// Builds the most permissive step paying `u_l` to the low type and `u_h`
/// to the high type, or certifies that no threshold can.
pub fn design_step(
    cfg: &ContractConfig,
    theta_l: AgentType,
    theta_h: AgentType,
    u_l: f64,
    u_h: f64,
) -> Result<DesignOutcome> {
    cfg.cost().check_incentive(u_l)?;
    cfg.cost().check_incentive(u_h)?;
    if u_l == u_h {
        return Ok(DesignOutcome::Feasible { incentive: IncentiveFunction::constant(u_l)?, feasibility: None });
    }
    let direction = if u_l > u_h { StepDirection::LowGetsMore } else { StepDirection::HighGetsMore };
    let range = step_threshold_range(cfg, theta_l, theta_h)?;
    let feas = step_feasibility(cfg, theta_l, theta_h, permissive_threshold(range, direction), direction)?;
    if feas.is_feasible(u_l, u_h)? {
        return Ok(DesignOutcome::Feasible {
            incentive: IncentiveFunction::step(feas.t, u_l, u_h)?,
            feasibility: Some(feas),
        });
    }
    let small = u_l.min(u_h);
    let boundary = feas
        .boundary_incentive(small)?
        .ok_or_else(|| ContractError::Numerical("infeasible request without a finite boundary".into()))?;
    Ok(DesignOutcome::Infeasible {
        requested: (u_l, u_h),
        lhs: feas.lhs(u_l, u_h)?,
        boundary_incentive: boundary,
        max_feasible_gap: boundary - small,
        feasibility: feas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub theta_l: f64,
    pub theta_h: f64,
    pub outcome: DesignOutcome,
}

/// Adjacent-pair composition of the two-type test for `n > 2` types.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseReport {
    /// Always `"pairwise-necessary"`: passing every pair does not certify
    /// truthfulness of the full type space.
    pub label: &'static str,
    pub all_pairs_feasible: bool,
    pub pairs: Vec<PairCheck>,
}

/// Runs [`design_step`] on each adjacent pair of `(theta, target)` rows.
pub fn pairwise_step_check(cfg: &ContractConfig, types: &[(f64, f64)]) -> Result<PairwiseReport> {
    if types.len() < 2 || types.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(ContractError::Config("pairwise check needs at least two strictly increasing types".into()));
    }
    let pairs = types
        .windows(2)
        .map(|w| {
            let outcome = design_step(cfg, AgentType::new(w[0].0)?, AgentType::new(w[1].0)?, w[0].1, w[1].1)?;
            Ok(PairCheck { theta_l: w[0].0, theta_h: w[1].0, outcome })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairwiseReport {
        label: "pairwise-necessary",
        all_pairs_feasible: pairs.iter().all(|p| p.outcome.is_feasible()),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::deviation_search_mh;

    fn quad() -> ContractConfig {
        ContractConfig::new(CostModel::quadratic(), 1.0).unwrap()
    }

    fn th(t: f64) -> AgentType {
        AgentType::new(t).unwrap()
    }

    #[test]
    fn constant_incentive_passes() {
        let cfg = quad();
        let r = check_bregman_truthful(&cfg, &IncentiveFunction::constant(1.0).unwrap(), None).unwrap();
        assert!(r.is_truthful());
        assert!(r.worst_pair.margin >= 0.0);
        assert_eq!(r.grid_meta.points, 256);
        assert_eq!(r.grid_meta.spacing, "log");
    }

    #[test]
    fn linear_incentive_fails() {
        let cfg = quad().with_interval(0.1, 5.0).unwrap();
        let u2 = IncentiveFunction::piecewise_linear(vec![0.1, 5.0], vec![0.1, 5.0]).unwrap();
        let r = check_bregman_truthful(&cfg, &u2, None).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.worst_pair.a_hat > r.worst_pair.a);
    }

    #[test]
    fn threshold_range_examples() {
        assert_eq!(step_threshold_range(&quad(), th(1.0), th(2.0)).unwrap(), (0.5, 1.0));
        let (lo, hi) = step_threshold_range(&quad(), th(1.5), th(1.5)).unwrap();
        assert_eq!(lo, hi);
        let p3 = ContractConfig::new(CostModel::power(3.0).unwrap(), 8.0).unwrap();
        let (lo, hi) = step_threshold_range(&p3, th(2.0), th(8.0)).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
        assert!(step_threshold_range(&quad(), th(2.0), th(1.0)).is_err());
    }

    #[test]
    fn running_instance_boundary() {
        let f = step_feasibility(&quad(), th(1.0), th(2.0), 1.0, StepDirection::LowGetsMore).unwrap();
        assert!((f.rhs_bound - 0.125).abs() < 1e-15);
        let b = f.boundary_incentive(1.0).unwrap().unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-10);
        assert!(f.is_feasible(1.41, 1.0).unwrap());
        assert!(!f.is_feasible(1.42, 1.0).unwrap());
        assert!(f.is_feasible(1.3, 1.3).unwrap());
        assert!(step_feasibility(&quad(), th(1.0), th(2.0), 1.2, StepDirection::LowGetsMore).is_err());
    }

    #[test]
    fn feasibility_matches_deviation_search() {
        let cfg = quad().with_interval(0.05, 3.0).unwrap();
        for (u_l, truthful) in [(1.40, true), (1.43, false)] {
            let u2 = IncentiveFunction::step(1.0, u_l, 1.0).unwrap();
            let high = deviation_search_mh(&cfg, &u2, th(2.0)).unwrap();
            let low = deviation_search_mh(&cfg, &u2, th(1.0)).unwrap();
            assert_eq!(high.truthful && low.truthful, truthful, "{u_l}: {high:?}");
        }
    }

    #[test]
    fn rhs_bound_grows_toward_permissive_end() {
        let cfg = quad();
        let mut prev = -1.0;
        for t in numeric::linspace(0.5, 1.0, 21) {
            let f = step_feasibility(&cfg, th(1.0), th(2.0), t, StepDirection::LowGetsMore).unwrap();
            assert!(f.rhs_bound >= prev);
            prev = f.rhs_bound;
        }
        let high = step_feasibility(&cfg, th(1.0), th(2.0), 0.5, StepDirection::HighGetsMore).unwrap();
        assert!((high.rhs_bound - 0.125).abs() < 1e-15);
    }

    #[test]
    fn design_examples() {
        let cfg = quad();
        match design_step(&cfg, th(1.0), th(2.0), 1.2, 1.0).unwrap() {
            DesignOutcome::Feasible { incentive, .. } => {
                assert_eq!(incentive, IncentiveFunction::step(1.0, 1.2, 1.0).unwrap())
            }
            other => panic!("{other:?}"),
        }
        match design_step(&cfg, th(1.0), th(2.0), 2.0, 1.0).unwrap() {
            DesignOutcome::Infeasible { boundary_incentive, max_feasible_gap, .. } => {
                assert!((boundary_incentive - 2f64.sqrt()).abs() < 1e-10);
                assert!((max_feasible_gap - (2f64.sqrt() - 1.0)).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
        match design_step(&cfg, th(1.0), th(2.0), 1.1, 1.1).unwrap() {
            DesignOutcome::Feasible { incentive, feasibility } => {
                assert!(incentive.is_constant() && feasibility.is_none())
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairwise_label() {
        let r = pairwise_step_check(&quad(), &[(1.0, 1.2), (2.0, 1.0), (3.0, 0.9)]).unwrap();
        assert_eq!(r.label, "pairwise-necessary");
        assert_eq!(r.pairs.len(), 2);
    }
}
