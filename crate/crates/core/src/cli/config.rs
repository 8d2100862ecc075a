//! JSON run configuration.
//!
//! Every section except `cost` and `u1` is optional; commands check for the
//! sections they need. Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ContractConfig, DEFAULT_GRID_SIZE, DEFAULT_REFINE_ITERS};
use crate::cost_model::{CostModel, TabulatedCost};
use crate::error::{ContractError, Result};
use crate::incentive::IncentiveFunction;
use crate::numeric;
use crate::stackelberg::{PrincipalBenefit, TypePrior, DEFAULT_PRIOR_NODES};
use crate::truthfulness::DEFAULT_BREGMAN_GRID;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cost: CostSpec,
    pub u1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_interval: Option<[f64; 2]>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<TypeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incentive: Option<IncentiveFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<AdjustmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<PrincipalBenefit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_design: Option<StepDesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Quadratic,
    Power {
        p: f64,
    },
    /// Either a CSV path (relative to the config file) or inline rows.
    Tabulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_size")]
    pub action_grid_size: usize,
    #[serde(default = "default_refine_iters")]
    pub refine_iters: usize,
    #[serde(default = "default_bregman_grid")]
    pub bregman_grid_size: usize,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}
fn default_refine_iters() -> usize {
    DEFAULT_REFINE_ITERS
}
fn default_bregman_grid() -> usize {
    DEFAULT_BREGMAN_GRID
}
fn default_validation_samples() -> usize {
    1000
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            action_grid_size: DEFAULT_GRID_SIZE,
            refine_iters: DEFAULT_REFINE_ITERS,
            bregman_grid_size: DEFAULT_BREGMAN_GRID,
            validation_samples: default_validation_samples(),
        }
    }
}

/// Agent types to examine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TypeSpec {
    /// An explicit list of samples.
    Samples(Vec<f64>),
    /// `count` log-spaced samples of a continuous type interval.
    Interval { lo: f64, hi: f64, count: usize },
}

impl TypeSpec {
    pub fn thetas(&self) -> Result<Vec<f64>> {
        let v = match self {
            Self::Samples(v) => v.clone(),
            Self::Interval { lo, hi, count } => {
                if !(*lo > 0.0 && hi > lo && *count >= 2) {
                    return Err(ContractError::Config(format!(
                        "type interval needs 0 < lo < hi and count >= 2, got [{lo}, {hi}] x {count}"
                    )));
                }
                numeric::logspace(*lo, *hi, *count)
            }
        };
        if v.is_empty() || v.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ContractError::Config("type samples must be non-empty and positive".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustmentSpec {
    /// Action at which the fee is normalized to zero (default: interval midpoint).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_ref: Option<f64>,
    /// Finite off-curve cap to probe for breakdown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    /// Types scanned for the breakdown (log-spaced).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_scan: Option<ScanRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default)]
    pub log: bool,
}

impl ScanRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi >= self.lo && self.count >= 1) {
            return Err(ContractError::Config(format!(
                "scan range [{}, {}] x {} is invalid",
                self.lo, self.hi, self.count
            )));
        }
        if self.log {
            if self.lo <= 0.0 {
                return Err(ContractError::Config("log scan needs a positive lower end".into()));
            }
            Ok(numeric::logspace(self.lo, self.hi, self.count))
        } else {
            Ok(numeric::linspace(self.lo, self.hi, self.count))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Discrete {
        /// `[theta, weight]` rows; weights are normalized.
        support: Vec<[f64; 2]>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default = "default_prior_nodes")]
        nodes: usize,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default = "default_prior_nodes")]
        nodes: usize,
    },
}

fn default_prior_nodes() -> usize {
    DEFAULT_PRIOR_NODES
}

impl PriorSpec {
    pub fn build(&self) -> Result<TypePrior> {
        match self {
            Self::Discrete { support } => TypePrior::normalized(support.iter().map(|r| (r[0], r[1])).collect()),
            Self::Uniform { lo, hi, nodes } => TypePrior::uniform(*lo, *hi, *nodes),
            Self::Lognormal { mu, sigma, nodes } => TypePrior::lognormal(*mu, *sigma, *nodes),
        }
    }
}

/// Discrete types with the second-stage incentive each should receive,
/// ordered by increasing cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDesignSpec {
    /// `[theta, target_incentive]` rows.
    pub types: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Theta,
    T,
    #[serde(rename = "u_l")]
    UL,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub range: ScanRange,
}

impl RunConfig {
    /// Parses JSON text, reporting the failing key path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ContractError::Config(format!(
                "config key `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    /// Reads a config file and resolves relative CSV paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ContractError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let CostSpec::Tabulated { csv: Some(p), .. } = &mut cfg.cost {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        match &self.cost {
            CostSpec::Quadratic => Ok(CostModel::quadratic()),
            CostSpec::Power { p } => CostModel::power(*p),
            CostSpec::Tabulated { csv, a, phi } => match (csv, a, phi) {
                (Some(path), None, None) => {
                    let file = fs::File::open(path).map_err(|e| {
                        ContractError::Config(format!("cannot open cost table {}: {e}", path.display()))
                    })?;
                    Ok(CostModel::from_table(TabulatedCost::from_csv(file)?))
                }
                (None, Some(a), Some(phi)) => CostModel::tabulated(a.clone(), phi.clone()),
                _ => Err(ContractError::Config(
                    "tabulated cost needs either `csv` or both `a` and `phi`".into(),
                )),
            },
        }
    }

    pub fn contract(&self) -> Result<ContractConfig> {
        let mut cfg = ContractConfig::new(self.cost_model()?, self.u1)?
            .with_grid_size(self.grid.action_grid_size)?
            .with_refine_iters(self.grid.refine_iters);
        if let Some([lo, hi]) = self.working_interval {
            cfg = cfg.with_interval(lo, hi)?;
        }
        Ok(cfg)
    }

    pub fn thetas(&self) -> Result<Vec<f64>> {
        self.types
            .as_ref()
            .ok_or_else(|| ContractError::Config("this command needs a `types` section".into()))?
            .thetas()
    }

    pub fn require_incentive(&self) -> Result<&IncentiveFunction> {
        let f = self
            .incentive
            .as_ref()
            .ok_or_else(|| ContractError::Config("this command needs an `incentive` section".into()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn require_step_design(&self) -> Result<Vec<(f64, f64)>> {
        let spec = self
            .step_design
            .as_ref()
            .ok_or_else(|| ContractError::Config("this command needs a `step_design` section".into()))?;
        if spec.types.len() < 2 {
            return Err(ContractError::Config("step_design needs at least two types".into()));
        }
        Ok(spec.types.iter().map(|r| (r[0], r[1])).collect())
    }
}
