//! Two-level step incentives for two discrete types.
//!
//! The low type `theta = 1` should act at `a1 >= 1` and the high type
//! `theta = 2` below it. Raising the reward for the low side past the
//! feasibility boundary breaks truthfulness.

use contractforge::agent::{AgentType, ContractConfig};
use contractforge::truthfulness::{self, DesignOutcome};
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)?.with_interval(0.05, 3.0)?;
    let (low, high) = (AgentType::new(1.0)?, AgentType::new(2.0)?);

    for u_low in [1.2, 1.4, 1.5] {
        match truthfulness::design_step(&cfg, low, high, u_low, 1.0)? {
            DesignOutcome::Feasible { incentive, .. } => println!("u_L = {u_low}: feasible, {incentive:?}"),
            DesignOutcome::Infeasible { lhs, boundary_incentive, .. } => println!(
                "u_L = {u_low}: infeasible (lhs {lhs:.4}), largest feasible u_L = {:.6}",
                boundary_incentive
            ),
        }
    }

    let report = truthfulness::pairwise_step_check(&cfg, &[(0.8, 1.3), (1.0, 1.1), (2.0, 1.0)])?;
    println!("\nthree types, {}: all pairs feasible = {}", report.label, report.all_pairs_feasible);
    Ok(())
}
