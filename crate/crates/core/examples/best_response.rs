//! Best responses and the conjugate identity for the three cost families.
//!
//! Run with `cargo run --example best_response`.

use contractforge::agent::{self, AgentType, ContractConfig};
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let table_a: Vec<f64> = (1..=40).map(|i| 0.1 * i as f64).collect();
    let table_phi = table_a.iter().map(|a| a.powi(3) / 3.0).collect();
    let families = [CostModel::quadratic(), CostModel::power(3.0)?, CostModel::tabulated(table_a, table_phi)?];

    let theta = AgentType::new(1.5)?;
    let u = 2.0;
    println!("{:<22} {:>10} {:>12} {:>12}", "cost", "a*", "value", "u a* - th phi");
    for cost in families {
        let cfg = ContractConfig::new(cost, 1.0)?;
        let a = agent::best_response(&cfg, u, theta)?;
        let value = agent::best_response_value(&cfg, u, theta)?;
        let direct = agent::stage_utility(&cfg, u, a, theta)?;
        println!("{:<22} {:>10.6} {:>12.8} {:>12.8}", cfg.cost().label(), a, value, direct);
    }
    Ok(())
}
