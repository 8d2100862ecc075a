//! Loads a tabulated cost from CSV, validates it and uses it like a
//! closed-form family.

use contractforge::agent::{self, AgentType, ContractConfig};
use contractforge::cost_model::TabulatedCost;
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let mut csv = String::from("a,phi\n");
    for i in 1..=60 {
        let a = 0.05 * i as f64;
        csv.push_str(&format!("{a},{}\n", a * a / 2.0 + a.powi(4) / 40.0));
    }
    let cost = CostModel::from_table(TabulatedCost::from_csv(csv.as_bytes())?);

    let report = cost.validate(1000);
    println!("{} validation passed: {}", report.family, report.passed);
    for check in &report.checks {
        println!("  {:<28} worst {:.3e} (tol {:.1e})", check.name, check.worst, check.tolerance);
    }

    let cfg = ContractConfig::new(cost, 1.0)?;
    for u in [0.5, 1.0, 2.0] {
        let a = agent::best_response(&cfg, u, AgentType::new(1.0)?)?;
        println!("u = {u}: best response {a:.6}, D(a, 1) = {:.6}", cfg.cost().bregman(a, 1.0)?);
    }
    Ok(())
}
