use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ContractError, Result};
use crate::numeric::fmt_sig;

/// How a [`FeeTable`] is evaluated between its nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeInterpolation {
    /// Cubic Hermite pieces using the one-sided slopes stored at each node.
    CubicHermite,
    Linear,
}

/// On-curve fee `f(a1)` tabulated on an increasing grid, normalized so that
/// `f(anchor) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeeTable {
    a1: Vec<f64>,
    f: Vec<f64>,
    /// (left-limit, right-limit) slopes at each node, Hermite tables only.
    slopes: Option<(Vec<f64>, Vec<f64>)>,
    anchor: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeeRow {
    a1: f64,
    f: f64,
}

impl FeeTable {
    fn check_grid(a1: &[f64], f: &[f64], anchor: f64) -> Result<()> {
        if a1.len() < 2 || a1.len() != f.len() {
            return Err(ContractError::Config(format!(
                "fee table needs at least two nodes with one value each ({} nodes, {} values)",
                a1.len(),
                f.len()
            )));
        }
        if a1.iter().chain(f).any(|v| !v.is_finite()) || a1.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ContractError::Config("fee table nodes must be finite and strictly increasing".into()));
        }
        if !(anchor >= a1[0] && anchor <= a1[a1.len() - 1]) {
            return Err(ContractError::Config(format!(
                "fee anchor {anchor} outside the table range [{}, {}]",
                a1[0],
                a1[a1.len() - 1]
            )));
        }
        Ok(())
    }

    /// Piecewise-linear table.
    pub fn linear(a1: Vec<f64>, f: Vec<f64>, anchor: f64) -> Result<Self> {
        Self::check_grid(&a1, &f, anchor)?;
        Ok(Self { a1, f, slopes: None, anchor })
    }

    /// Cubic Hermite table with one-sided node slopes.
    pub fn hermite(a1: Vec<f64>, f: Vec<f64>, slope_left: Vec<f64>, slope_right: Vec<f64>, anchor: f64) -> Result<Self> {
        Self::check_grid(&a1, &f, anchor)?;
        if slope_left.len() != a1.len() || slope_right.len() != a1.len() {
            return Err(ContractError::Config("fee slopes must match the node count".into()));
        }
        Ok(Self { a1, f, slopes: Some((slope_left, slope_right)), anchor })
    }

    /// The zero fee on `grid`.
    pub fn zeros(grid: Vec<f64>, anchor: f64) -> Result<Self> {
        let n = grid.len();
        Self::hermite(grid, vec![0.0; n], vec![0.0; n], vec![0.0; n], anchor)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.a1
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn range(&self) -> (f64, f64) {
        (self.a1[0], self.a1[self.a1.len() - 1])
    }

    pub fn interpolation(&self) -> FeeInterpolation {
        if self.slopes.is_some() {
            FeeInterpolation::CubicHermite
        } else {
            FeeInterpolation::Linear
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(ContractError::Domain(format!("fee evaluated at {x} outside its table [{lo}, {hi}]")));
        }
        let j = self.a1.partition_point(|&v| v <= x);
        if j > 0 && self.a1[j - 1] == x {
            return Ok(self.f[j - 1]);
        }
        let i = j - 1;
        let (x0, x1) = (self.a1[i], self.a1[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (f0, f1) = (self.f[i], self.f[i + 1]);
        Ok(match &self.slopes {
            None => f0 + s * (f1 - f0),
            Some((left, right)) => {
                let (m0, m1) = (right[i] * h, left[i + 1] * h);
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * f0
                    + (s3 - 2.0 * s2 + s) * m0
                    + (-2.0 * s3 + 3.0 * s2) * f1
                    + (s3 - s2) * m1
            }
        })
    }

    /// Writes the `a1,f` CSV (LF line endings, 12 significant digits).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "a1,f")?;
        for (a, f) in self.a1.iter().zip(&self.f) {
            writeln!(w, "{},{}", fmt_sig(*a), fmt_sig(*f))?;
        }
        Ok(())
    }

    /// Reads an `a1,f` CSV as a piecewise-linear table.
    pub fn read_csv<R: Read>(r: R, anchor: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "a1" || &headers[1] != "f" {
            return Err(ContractError::Config("fee CSV must have header `a1,f`".into()));
        }
        let mut a1 = Vec::new();
        let mut f = Vec::new();
        for row in rdr.deserialize() {
            let row: FeeRow = row?;
            a1.push(row.a1);
            f.push(row.f);
        }
        Self::linear(a1, f, anchor)
    }
}
