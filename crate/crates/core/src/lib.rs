//! Two-stage principal-agent contracts with a privately known cost type.
//!
//! The agent works twice for the same principal. His first-stage effort
//! reveals his type, which the principal may then exploit at the second
//! stage; the crate measures when that makes misreporting profitable and
//! how to prevent it.
//!
//! * [`cost_model`]: convex effort costs with derivative, inverse, conjugate
//!   and Bregman divergence.
//! * [`agent`]: best responses, cumulative utilities and brute-force
//!   deviation search.
//! * [`stackelberg`]: the principal's single-stage problem.
//! * [`truthfulness`]: pairwise conjugate test and two-type step design.
//! * [`adjustment`]: fee construction and verification when both actions
//!   are observed.
//! * [`cli`]: config-driven reports behind the `contractforge` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod agent;
pub mod cli;
pub mod cost_model;
pub mod error;
pub mod incentive;
pub mod numeric;
pub mod stackelberg;
pub mod truthfulness;

pub use adjustment::{AdjustmentFunction, ConsistencyCurve, FeeTable};
pub use agent::{AgentType, ContractConfig, DeviationReport};
pub use cost_model::CostModel;
pub use error::{ContractError, Result};
pub use incentive::IncentiveFunction;
pub use stackelberg::{PrincipalBenefit, TypePrior};
