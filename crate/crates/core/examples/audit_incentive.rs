//! Audits second-stage incentives for truthful first-stage play.
//!
//! A constant incentive passes; a rising linear one invites the agent to
//! overstate effort, and the deviation search shows by how much.

use contractforge::agent::{self, AgentType, ContractConfig};
use contractforge::incentive::IncentiveFunction;
use contractforge::truthfulness;
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)?.with_interval(0.1, 4.0)?;
    let candidates = [
        ("constant", IncentiveFunction::constant(1.2)?),
        ("rising", IncentiveFunction::piecewise_linear(vec![0.1, 4.0], vec![0.6, 2.4])?),
    ];
    for (name, u2) in &candidates {
        let bregman = truthfulness::check_bregman_truthful(&cfg, u2, None)?;
        println!("{name}: bregman verdict {:?}, worst margin {:.3e}", bregman.verdict, bregman.worst_pair.margin);
        for theta in [0.5, 1.0, 2.0] {
            let r = agent::deviation_search_mh(&cfg, u2, AgentType::new(theta)?)?;
            println!(
                "  theta {theta:>3}: truthful a1 = {:.4}, best a1 = {:.4}, gain = {:.3e}",
                r.truthful_action, r.best_deviation, r.gain
            );
        }
    }
    Ok(())
}
