//! Builds the fee that makes a non-constant second-stage incentive truthful
//! and checks it against a direct deviation search.

use contractforge::adjustment;
use contractforge::agent::{self, AgentType, ContractConfig};
use contractforge::incentive::IncentiveFunction;
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)?.with_interval(0.2, 3.0)?.with_grid_size(512)?;
    let u2 = IncentiveFunction::piecewise_linear(vec![0.2, 3.0], vec![0.8, 1.6])?;
    let thetas = [0.6, 1.0, 1.8];

    let theta = AgentType::new(1.0)?;
    let before = agent::deviation_search_mh(&cfg, &u2, theta)?;
    println!("without a fee: gain from deviating = {:.4e}", before.gain);

    let adj = adjustment::build_truthful_adjustment(&cfg, &u2, None)?;
    let fee = adj.fee();
    println!("fee anchored at a1 = {}, {} nodes, max |f| = {:.6}", fee.anchor(), fee.nodes().len(), fee.max_abs());
    for a1 in [0.5, 1.0, 2.0, 2.8] {
        println!("  f({a1}) = {:>10.6}", fee.eval(a1)?);
    }

    let check = adjustment::verify_adjustment(&cfg, &u2, &adj, &thetas)?;
    println!("verified: {} (worst margin {:.3e}, search agrees: {})", check.holds, check.worst_margin, check.all_agree);
    Ok(())
}
