//! Second-stage incentive functions `u2: A -> U`.

use serde::{Deserialize, Serialize};

use crate::error::{ContractError, Result};

/// The incentive the principal commits to pay at stage two, as a function of
/// the observed first-stage action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncentiveFunction {
    Constant {
        u: f64,
    },
    /// `u_above` when `a1 >= t`, `u_below` otherwise (right-closed at `t`).
    TwoTypeStep {
        t: f64,
        u_above: f64,
        u_below: f64,
    },
    /// Linear interpolation between knots, constant beyond the end knots.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl IncentiveFunction {
    pub fn constant(u: f64) -> Result<Self> {
        let f = Self::Constant { u };
        f.validate()?;
        Ok(f)
    }

    pub fn step(t: f64, u_above: f64, u_below: f64) -> Result<Self> {
        let f = Self::TwoTypeStep { t, u_above, u_below };
        f.validate()?;
        Ok(f)
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self::PiecewiseLinear { knots, values };
        f.validate()?;
        Ok(f)
    }

    /// Checks that all incentive levels are positive and knots are ordered.
    pub fn validate(&self) -> Result<()> {
        let positive = |u: f64| u.is_finite() && u > 0.0;
        match self {
            Self::Constant { u } => {
                if !positive(*u) {
                    return Err(ContractError::Domain(format!("constant incentive {u} must be positive")));
                }
            }
            Self::TwoTypeStep { t, u_above, u_below } => {
                if !t.is_finite() {
                    return Err(ContractError::Domain(format!("step threshold {t} must be finite")));
                }
                if !positive(*u_above) || !positive(*u_below) {
                    return Err(ContractError::Domain(format!(
                        "step levels ({u_above}, {u_below}) must be positive"
                    )));
                }
            }
            Self::PiecewiseLinear { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err(ContractError::Config(format!(
                        "piecewise-linear incentive needs matching non-empty knots/values ({} vs {})",
                        knots.len(),
                        values.len()
                    )));
                }
                if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ContractError::Config("incentive knots must be finite and strictly increasing".into()));
                }
                if let Some(v) = values.iter().find(|v| !positive(**v)) {
                    return Err(ContractError::Domain(format!("incentive value {v} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, a1: f64) -> f64 {
        match self {
            Self::Constant { u } => *u,
            Self::TwoTypeStep { t, u_above, u_below } => {
                if a1 >= *t {
                    *u_above
                } else {
                    *u_below
                }
            }
            Self::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                if a1 <= knots[0] {
                    return values[0];
                }
                if a1 >= knots[n - 1] {
                    return values[n - 1];
                }
                let j = knots.partition_point(|&k| k <= a1) - 1;
                let w = (a1 - knots[j]) / (knots[j + 1] - knots[j]);
                values[j] + w * (values[j + 1] - values[j])
            }
        }
    }

    /// Right derivative `lim_{h->0+} (u2(a1 + h) - u2(a1)) / h`.
    ///
    /// Returns `None` at a jump of a step incentive.
    pub fn derivative_right(&self, a1: f64) -> Option<f64> {
        match self {
            Self::Constant { .. } => Some(0.0),
            Self::TwoTypeStep { .. } => Some(0.0),
            Self::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                if n < 2 || a1 < knots[0] || a1 >= knots[n - 1] {
                    return Some(0.0);
                }
                let j = knots.partition_point(|&k| k <= a1) - 1;
                Some((values[j + 1] - values[j]) / (knots[j + 1] - knots[j]))
            }
        }
    }

    /// Left derivative; `None` at a jump of a step incentive.
    pub fn derivative_left(&self, a1: f64) -> Option<f64> {
        match self {
            Self::Constant { .. } => Some(0.0),
            Self::TwoTypeStep { t, .. } => (a1 != *t).then_some(0.0),
            Self::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                if n < 2 || a1 <= knots[0] || a1 > knots[n - 1] {
                    return Some(0.0);
                }
                let j = knots.partition_point(|&k| k < a1);
                Some((values[j] - values[j - 1]) / (knots[j] - knots[j - 1]))
            }
        }
    }

    /// `u2'(a1)` where it exists.
    pub fn derivative(&self, a1: f64) -> Option<f64> {
        match self {
            Self::TwoTypeStep { t, .. } if a1 == *t => None,
            _ => {
                let r = self.derivative_right(a1)?;
                let l = self.derivative_left(a1)?;
                (r == l).then_some(r)
            }
        }
    }

    /// Points where `u2` jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        match self {
            Self::TwoTypeStep { t, u_above, u_below } if u_above != u_below => vec![*t],
            _ => Vec::new(),
        }
    }

    /// Points where `u2` is continuous but not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Self::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                let slope = |j: usize| (values[j + 1] - values[j]) / (knots[j + 1] - knots[j]);
                (0..n)
                    .filter(|&j| {
                        let left = if j == 0 { 0.0 } else { slope(j - 1) };
                        let right = if j + 1 == n { 0.0 } else { slope(j) };
                        left != right
                    })
                    .map(|j| knots[j])
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Every point a maximizer must probe explicitly.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.discontinuities();
        pts.extend(self.kinks());
        pts
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::TwoTypeStep { u_above, u_below, .. } => u_above == u_below,
            Self::PiecewiseLinear { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Whether `u2` is differentiable away from finitely many kinks.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Self::TwoTypeStep { u_above, u_below, .. } if u_above != u_below)
    }
}
