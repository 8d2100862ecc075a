//! A finite penalty for inconsistent second-stage play only deters types
//! below a threshold. Scanning theta locates the first type that prefers to
//! pay the cap, next to the closed-form bound.

use contractforge::adjustment::{self, FeeTable};
use contractforge::agent::ContractConfig;
use contractforge::incentive::IncentiveFunction;
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)?.with_interval(0.2, 3.0)?.with_grid_size(256)?;
    let u2 = IncentiveFunction::constant(2.0)?;
    let fee = FeeTable::zeros(vec![0.2, 3.0], 1.0)?;
    let scan: Vec<f64> = (1..=40).map(|i| 0.05 * i as f64).collect();

    for cap in [0.25, 1.0, 2.0] {
        match adjustment::finite_penalty_breakdown(&cfg, &u2, &fee, cap, &scan)? {
            Some(b) => println!(
                "cap {cap:>4}: breaks at theta = {:.2} (bound {:.6}), a1 = {:.3}, a2 {:.3} -> {:.3}, gain {:.4e}",
                b.theta, b.closed_form_theta, b.a1, b.consistent_action, b.deviation_action, b.gain
            ),
            None => println!("cap {cap:>4}: holds on the whole scan"),
        }
    }
    Ok(())
}
