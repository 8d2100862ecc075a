//! Strictly convex effort costs and the convex-analysis toolkit built on them.
//!
//! A [`CostModel`] evaluates the cost `phi`, its derivative, the inverse of
//! the derivative, the convex conjugate `phi*(u) = sup_a [u a - phi(a)]` and
//! the Bregman divergence `D(x, y) = phi(x) - phi(y) - phi'(y) (x - y)`.
//!
//! Built-in analytic families live on the positive half-line for both
//! actions and incentives. Tabulated costs are restricted to the closed
//! range of their table.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ContractError, Result};
use crate::numeric;

/// Seed for the random Fenchel-Young probes in [`CostModel::validate`].
pub const VALIDATION_SEED: u64 = 0x5eed_c057;

/// Sampling range used to audit analytic families.
const ANALYTIC_SAMPLE_RANGE: (f64, f64) = (1e-3, 10.0);

const MIN_CSV_ROWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum CostFamily {
    /// `phi(a) = a^2 / 2`.
    Quadratic,
    /// `phi(a) = a^p / p` with `p > 1`.
    Power { p: f64 },
    Tabulated(TabulatedCost),
}

/// A cost sampled on a strictly increasing action grid.
///
/// Node slopes come from three-point finite differences (exact on
/// quadratics) and the derivative is linear between nodes. The cost is the
/// integral of that derivative starting from the first tabulated value, so
/// `phi`, `phi'` and `phi*` form an exact conjugate triple; away from the
/// first node the interpolated cost can differ from the data by the
/// accumulated trapezoid error (zero for quadratic data).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCost {
    a: Vec<f64>,
    phi: Vec<f64>,
    slope: Vec<f64>,
    /// Interpolated cost at each node.
    level: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CostRow {
    a: f64,
    phi: f64,
}

impl TabulatedCost {
    pub fn new(a: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if a.len() != phi.len() {
            return Err(ContractError::Config(format!(
                "tabulated cost has {} actions but {} cost values",
                a.len(),
                phi.len()
            )));
        }
        if a.len() < 3 {
            return Err(ContractError::Config("tabulated cost needs at least 3 rows".into()));
        }
        if a.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(ContractError::Config("tabulated cost contains non-finite values".into()));
        }
        if let Some(w) = a.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ContractError::Config(format!(
                "tabulated actions must be strictly increasing (row {})",
                w + 2
            )));
        }
        let slope = node_slopes(&a, &phi);
        let mut level = Vec::with_capacity(a.len());
        level.push(phi[0]);
        for i in 1..a.len() {
            level.push(level[i - 1] + 0.5 * (a[i] - a[i - 1]) * (slope[i - 1] + slope[i]));
        }
        Ok(Self { a, phi, slope, level })
    }

    /// Reads a two-column CSV with header `a,phi` and at least 16 rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "a" || &headers[1] != "phi" {
            return Err(ContractError::Config(format!(
                "tabulated cost CSV must have header `a,phi`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut a = Vec::new();
        let mut phi = Vec::new();
        for row in rdr.deserialize() {
            let row: CostRow = row?;
            a.push(row.a);
            phi.push(row.phi);
        }
        if a.len() < MIN_CSV_ROWS {
            return Err(ContractError::Config(format!(
                "tabulated cost CSV needs at least {MIN_CSV_ROWS} rows, found {}",
                a.len()
            )));
        }
        Self::new(a, phi)
    }

    pub fn actions(&self) -> &[f64] {
        &self.a
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn node_slopes(&self) -> &[f64] {
        &self.slope
    }

    /// The interpolated cost at each node.
    pub fn node_costs(&self) -> &[f64] {
        &self.level
    }

    fn range(&self) -> (f64, f64) {
        (self.a[0], self.a[self.a.len() - 1])
    }

    fn cell(&self, x: f64) -> usize {
        let i = self.a.partition_point(|&v| v <= x);
        i.saturating_sub(1).min(self.a.len() - 2)
    }

    fn cost(&self, x: f64) -> f64 {
        let i = self.cell(x);
        let h = self.a[i + 1] - self.a[i];
        let s = x - self.a[i];
        self.level[i] + self.slope[i] * s + (self.slope[i + 1] - self.slope[i]) * s * s / (2.0 * h)
    }

    fn deriv(&self, x: f64) -> f64 {
        let i = self.cell(x);
        let h = self.a[i + 1] - self.a[i];
        self.slope[i] + (self.slope[i + 1] - self.slope[i]) * (x - self.a[i]) / h
    }

    fn second_deriv(&self, x: f64) -> f64 {
        let i = self.cell(x);
        (self.slope[i + 1] - self.slope[i]) / (self.a[i + 1] - self.a[i])
    }
}

fn node_slopes(a: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = a.len();
    let three_point = |i0: usize, at: usize| {
        let (x0, x1, x2) = (a[i0], a[i0 + 1], a[i0 + 2]);
        let (y0, y1, y2) = (phi[i0], phi[i0 + 1], phi[i0 + 2]);
        let x = a[at];
        // derivative of the interpolating parabola through three nodes
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|i| match i {
            0 => three_point(0, 0),
            _ if i == n - 1 => three_point(n - 3, n - 1),
            _ => three_point(i - 1, i),
        })
        .collect()
}

/// A convex cost `phi` together with its calculus.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    family: CostFamily,
}

/// `D(x, y)` evaluated at a specific pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BregmanPair {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

impl CostModel {
    pub fn quadratic() -> Self {
        Self { family: CostFamily::Quadratic }
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(ContractError::Config(format!("power cost exponent must exceed 1, got {p}")));
        }
        Ok(Self { family: CostFamily::Power { p } })
    }

    pub fn tabulated(a: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        Ok(Self { family: CostFamily::Tabulated(TabulatedCost::new(a, phi)?) })
    }

    pub fn from_table(table: TabulatedCost) -> Self {
        Self { family: CostFamily::Tabulated(table) }
    }

    pub fn family(&self) -> &CostFamily {
        &self.family
    }

    /// Short human-readable family label, e.g. `power(p=3)`.
    pub fn label(&self) -> String {
        match &self.family {
            CostFamily::Quadratic => "quadratic".into(),
            CostFamily::Power { p } => format!("power(p={p})"),
            CostFamily::Tabulated(t) => format!("tabulated({} rows)", t.a.len()),
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.family, CostFamily::Tabulated(_))
    }

    /// Closed action range on which the model can be evaluated.
    ///
    /// Analytic families report `[0, inf)`: the open half-line plus its
    /// boundary limit.
    pub fn action_range(&self) -> (f64, f64) {
        match &self.family {
            CostFamily::Tabulated(t) => t.range(),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Range of incentives `phi'(A)`; open at zero for analytic families.
    pub fn incentive_range(&self) -> (f64, f64) {
        match &self.family {
            CostFamily::Tabulated(t) => (t.slope[0], t.slope[t.slope.len() - 1]),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Errors unless `a` lies in the evaluable action range.
    pub fn check_action(&self, a: f64) -> Result<()> {
        let (lo, hi) = self.action_range();
        if a.is_finite() && a >= lo && a <= hi {
            Ok(())
        } else {
            Err(ContractError::Domain(format!(
                "action {a} outside the action domain [{lo}, {hi}] of {}",
                self.label()
            )))
        }
    }

    /// Errors unless `u` lies in the incentive domain `U`.
    pub fn check_incentive(&self, u: f64) -> Result<()> {
        let ok = match &self.family {
            CostFamily::Tabulated(t) => {
                let (lo, hi) = (t.slope[0], t.slope[t.slope.len() - 1]);
                u.is_finite() && u >= lo && u <= hi
            }
            _ => u.is_finite() && u > 0.0,
        };
        if ok {
            Ok(())
        } else {
            let (lo, hi) = self.incentive_range();
            Err(ContractError::Domain(format!(
                "incentive {u} outside the incentive domain ({lo}, {hi}) of {}",
                self.label()
            )))
        }
    }

    /// `phi(a)`.
    pub fn eval_cost(&self, a: f64) -> Result<f64> {
        self.check_action(a)?;
        Ok(match &self.family {
            CostFamily::Quadratic => 0.5 * a * a,
            CostFamily::Power { p } => a.powf(*p) / p,
            CostFamily::Tabulated(t) => t.cost(a),
        })
    }

    /// `phi'(a)`.
    pub fn eval_deriv(&self, a: f64) -> Result<f64> {
        self.check_action(a)?;
        Ok(match &self.family {
            CostFamily::Quadratic => a,
            CostFamily::Power { p } => a.powf(p - 1.0),
            CostFamily::Tabulated(t) => t.deriv(a),
        })
    }

    /// `phi''(a)`; piecewise constant for tabulated costs (right cell at nodes).
    pub fn eval_second_deriv(&self, a: f64) -> Result<f64> {
        self.check_action(a)?;
        let v = match &self.family {
            CostFamily::Quadratic => 1.0,
            CostFamily::Power { p } => (p - 1.0) * a.powf(p - 2.0),
            CostFamily::Tabulated(t) => t.second_deriv(a),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ContractError::Numerical(format!("second derivative of {} is unbounded at {a}", self.label())))
        }
    }

    /// `(phi')^{-1}(u)`.
    pub fn inv_deriv(&self, u: f64) -> Result<f64> {
        self.check_incentive(u)?;
        match &self.family {
            CostFamily::Quadratic => Ok(u),
            CostFamily::Power { p } => Ok(u.powf(1.0 / (p - 1.0))),
            CostFamily::Tabulated(t) => {
                let (lo, hi) = t.range();
                numeric::bisect_increasing(|x| t.deriv(x), u, lo, hi, 1e-10 * (1.0 + hi.abs()))
                    .ok_or_else(|| {
                        ContractError::Convergence(format!(
                            "could not bracket phi'(a) = {u} on the tabulated range [{lo}, {hi}]"
                        ))
                    })
            }
        }
    }

    /// Convex conjugate `phi*(u) = sup_a [u a - phi(a)]`.
    pub fn conjugate(&self, u: f64) -> Result<f64> {
        self.check_incentive(u)?;
        match &self.family {
            CostFamily::Quadratic => Ok(0.5 * u * u),
            CostFamily::Power { p } => {
                let q = p / (p - 1.0);
                Ok(u.powf(q) / q)
            }
            CostFamily::Tabulated(t) => {
                let best = numeric::max_on_nodes(|x| u * x - t.cost(x), &t.a, 200);
                Ok(best.value)
            }
        }
    }

    /// Bregman divergence `phi(x) - phi(y) - phi'(y) (x - y)`.
    pub fn bregman(&self, x: f64, y: f64) -> Result<f64> {
        if x == y {
            self.check_action(x)?;
            return Ok(0.0);
        }
        Ok(self.eval_cost(x)? - self.eval_cost(y)? - self.eval_deriv(y)? * (x - y))
    }

    pub fn bregman_pair(&self, x: f64, y: f64) -> Result<BregmanPair> {
        Ok(BregmanPair { x, y, value: self.bregman(x, y)? })
    }

    /// Audits convexity numerically with the default seed.
    pub fn validate(&self, sample_count: usize) -> ValidationReport {
        self.validate_with_seed(sample_count, VALIDATION_SEED)
    }

    pub fn validate_with_seed(&self, sample_count: usize, seed: u64) -> ValidationReport {
        let n = sample_count.max(3);
        let (lo, hi) = match &self.family {
            CostFamily::Tabulated(t) => t.range(),
            _ => ANALYTIC_SAMPLE_RANGE,
        };
        let mut samples = if lo > 0.0 { numeric::logspace(lo, hi, n) } else { numeric::linspace(lo, hi, n) };
        if let CostFamily::Tabulated(t) = &self.family {
            samples.extend_from_slice(&t.a);
            samples.sort_by(f64::total_cmp);
            samples.dedup();
        }
        let rt_tol = if self.is_tabulated() { 1e-6 } else { 1e-10 };

        let mut checks = Vec::with_capacity(4);

        let derivs: Vec<f64> = samples.iter().map(|&a| self.eval_deriv(a).unwrap_or(f64::NAN)).collect();
        let mut min_increment = derivs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if let CostFamily::Tabulated(t) = &self.family {
            let node_min = t.slope.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            min_increment = min_increment.min(node_min);
        }
        checks.push(ValidationCheck {
            name: "derivative_strictly_increasing".into(),
            passed: min_increment > 0.0,
            worst: min_increment,
            tolerance: 0.0,
        });

        let mut worst_rt = 0.0f64;
        for (&a, &d) in samples.iter().zip(&derivs) {
            let err = match self.inv_deriv(d) {
                Ok(back) => {
                    let forward = (back - a).abs() / (1.0 + a.abs());
                    let reverse = match self.eval_deriv(back) {
                        Ok(dd) => (dd - d).abs() / (1.0 + d.abs()),
                        Err(_) => f64::INFINITY,
                    };
                    forward.max(reverse)
                }
                Err(_) => f64::INFINITY,
            };
            worst_rt = worst_rt.max(if err.is_nan() { f64::INFINITY } else { err });
        }
        checks.push(ValidationCheck {
            name: "inverse_round_trip".into(),
            passed: worst_rt <= rt_tol,
            worst: worst_rt,
            tolerance: rt_tol,
        });

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_gap = f64::INFINITY;
        let mut worst_equality = 0.0f64;
        for _ in 0..n {
            let a = rng.gen_range(lo..=hi);
            let a_prime = rng.gen_range(lo..=hi);
            let gap = self
                .eval_deriv(a_prime)
                .and_then(|u| Ok(self.eval_cost(a)? + self.conjugate(u)? - a * u));
            worst_gap = worst_gap.min(gap.unwrap_or(f64::NEG_INFINITY));
            let eq = self
                .eval_deriv(a)
                .and_then(|u| Ok(self.eval_cost(a)? + self.conjugate(u)? - a * u));
            worst_equality = worst_equality.max(eq.map(f64::abs).unwrap_or(f64::INFINITY));
        }
        checks.push(ValidationCheck {
            name: "fenchel_young_inequality".into(),
            passed: worst_gap >= -1e-8,
            worst: worst_gap,
            tolerance: 1e-8,
        });
        checks.push(ValidationCheck {
            name: "fenchel_young_equality".into(),
            passed: worst_equality <= 1e-8,
            worst: worst_equality,
            tolerance: 1e-8,
        });

        ValidationReport {
            family: self.label(),
            sample_count: n,
            sample_range: [lo, hi],
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub family: String,
    pub sample_count: usize,
    pub sample_range: [f64; 2],
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}
