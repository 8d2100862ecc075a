//! Complete-information and ex-ante Stackelberg solutions.
//!
//! With quadratic cost and a linear benefit `k a`, the principal's optimum
//! is `u = k / 2` for every type.

use contractforge::agent::{AgentType, ContractConfig};
use contractforge::stackelberg::{self, PrincipalBenefit, TypePrior};
use contractforge::{CostModel, Result};

pub fn main() -> Result<()> {
    let cfg = ContractConfig::new(CostModel::quadratic(), 1.0)?;
    let rho = PrincipalBenefit::Linear { k: 1.0 };

    for theta in [0.5, 1.0, 2.0] {
        let s = stackelberg::solve_complete_info(&cfg, &rho, AgentType::new(theta)?)?;
        println!("theta {theta:>4}: u_e = {:.6}, a_e = {:.6}, value = {:.6}", s.u_e, s.a_e, s.value);
    }

    let concave = PrincipalBenefit::Power { coeff: 2.0, exponent: 0.7 };
    let prior = TypePrior::lognormal(0.0, 0.5, 17)?;
    let ex_ante = stackelberg::solve_ex_ante(&cfg, &concave, &prior)?;
    let informed: f64 = prior
        .support()
        .map(|(t, w)| Ok(w * stackelberg::solve_complete_info(&cfg, &concave, AgentType::new(t)?)?.value))
        .sum::<Result<f64>>()?;
    println!("\nlognormal prior, concave benefit");
    println!("  single incentive u_e = {:.6}, expected value = {:.6}", ex_ante.u_e, ex_ante.value);
    println!("  type-by-type optimum expected value  = {informed:.6}");
    println!("  value of knowing the type           = {:.6}", informed - ex_ante.value);
    Ok(())
}
