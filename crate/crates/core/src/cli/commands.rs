use serde::Serialize;
use serde_json::{json, Value};

use super::config::{RunConfig, SweepParameter};
use super::CommandKind;
use crate::adjustment::{self, AdjustmentFunction};
use crate::agent::{self, AgentType, ContractConfig, DeviationReport, GAIN_TOLERANCE};
use crate::error::{ContractError, Result};
use crate::incentive::IncentiveFunction;
use crate::numeric::{self, fmt_sig};
use crate::stackelberg;
use crate::truthfulness::{self, StepDirection, DEFAULT_BREGMAN_GRID};

/// Result payload of one command plus the tables it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub results: Value,
    /// `(file name, CSV body)` pairs written to the output directory.
    pub files: Vec<(String, String)>,
    pub validation_failed: bool,
}

impl CommandOutput {
    fn new(results: impl Serialize) -> Result<Self> {
        Ok(Self { results: serde_json::to_value(results)?, files: Vec::new(), validation_failed: false })
    }

    fn with_file(mut self, name: &str, body: String) -> Self {
        self.files.push((name.to_string(), body));
        self
    }
}

/// Runs one command on a parsed configuration. Pure apart from the thread
/// pool it runs on, so identical configs give identical outputs.
pub fn execute(kind: CommandKind, cfg: &RunConfig) -> Result<CommandOutput> {
    match kind {
        CommandKind::Validate => validate(cfg),
        CommandKind::Solve => solve(cfg),
        CommandKind::Audit => audit(cfg),
        CommandKind::DesignStep => design_step(cfg),
        CommandKind::BuildAdjustment => build_adjustment(cfg),
        CommandKind::Sweep => sweep(cfg),
    }
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn validate(cfg: &RunConfig) -> Result<CommandOutput> {
    let report = cfg.cost_model()?.validate(cfg.grid.validation_samples);
    let failed = !report.passed;
    let mut out = CommandOutput::new(&report)?;
    out.validation_failed = failed;
    Ok(out)
}

fn solve(cfg: &RunConfig) -> Result<CommandOutput> {
    let contract = cfg.contract()?;
    let rho = cfg.rho.as_ref().ok_or_else(|| ContractError::Config("solve needs a `rho` section".into()))?;
    if cfg.types.is_none() && cfg.prior.is_none() {
        return Err(ContractError::Config("solve needs a `types` or `prior` section".into()));
    }
    let mut results = serde_json::Map::new();
    let mut out_files = Vec::new();
    if cfg.types.is_some() {
        let solutions = cfg
            .thetas()?
            .into_iter()
            .map(|t| stackelberg::solve_complete_info(&contract, rho, AgentType::new(t)?))
            .collect::<Result<Vec<_>>>()?;
        let table = csv_table(
            "theta,u_e,a_e,value,boundary_flag",
            cfg.thetas()?.iter().zip(&solutions).map(|(t, s)| {
                vec![fmt_sig(*t), fmt_sig(s.u_e), fmt_sig(s.a_e), fmt_sig(s.value), s.boundary_flag.to_string()]
            }),
        );
        out_files.push(("solve.csv".to_string(), table));
        results.insert("complete_info".into(), serde_json::to_value(solutions)?);
    }
    if let Some(prior) = &cfg.prior {
        let solution = stackelberg::solve_ex_ante(&contract, rho, &prior.build()?)?;
        results.insert("ex_ante".into(), serde_json::to_value(solution)?);
    }
    Ok(CommandOutput { results: Value::Object(results), files: out_files, validation_failed: false })
}

fn bregman_grid(cfg: &RunConfig, contract: &ContractConfig) -> Option<Vec<f64>> {
    let n = cfg.grid.bregman_grid_size;
    if n == DEFAULT_BREGMAN_GRID {
        return None;
    }
    let (lo, hi) = contract.working_interval();
    Some(if lo > 0.0 { numeric::logspace(lo, hi, n) } else { numeric::linspace(lo, hi, n) })
}

fn audit(cfg: &RunConfig) -> Result<CommandOutput> {
    let contract = cfg.contract()?;
    let u2 = cfg.require_incentive()?;
    let grid = bregman_grid(cfg, &contract);
    let bregman = truthfulness::check_bregman_truthful(&contract, u2, grid.as_deref())?;
    let per_type = cfg
        .thetas()?
        .into_iter()
        .map(|t| agent::deviation_search_mh(&contract, u2, AgentType::new(t)?))
        .collect::<Result<Vec<DeviationReport>>>()?;
    let worst = per_type.iter().map(|r| r.gain).fold(f64::NEG_INFINITY, f64::max);
    let truthful = per_type.iter().all(|r| r.truthful);
    let table = csv_table(
        "theta,truthful_action,best_deviation,gain",
        per_type.iter().map(|r| {
            vec![fmt_sig(r.theta), fmt_sig(r.truthful_action), fmt_sig(r.best_deviation), fmt_sig(r.gain)]
        }),
    );
    let results = json!({
        "verdict": if truthful { "truthful" } else { "untruthful" },
        "worst_gain": worst,
        "gain_tolerance": GAIN_TOLERANCE,
        "scope": contract.grid_meta().scope,
        "bregman": bregman,
        "per_type": per_type,
    });
    Ok(CommandOutput::new(results)?.with_file("audit.csv", table))
}

fn design_step(cfg: &RunConfig) -> Result<CommandOutput> {
    let contract = cfg.contract()?;
    let types = cfg.require_step_design()?;
    if types.len() == 2 {
        let outcome = truthfulness::design_step(
            &contract,
            AgentType::new(types[0].0)?,
            AgentType::new(types[1].0)?,
            types[0].1,
            types[1].1,
        )?;
        CommandOutput::new(json!({ "outcome": outcome }))
    } else {
        CommandOutput::new(json!({ "pairwise": truthfulness::pairwise_step_check(&contract, &types)? }))
    }
}

fn build_adjustment(cfg: &RunConfig) -> Result<CommandOutput> {
    let contract = cfg.contract()?;
    let u2 = cfg.require_incentive()?;
    let spec = cfg
        .adjustment
        .as_ref()
        .ok_or_else(|| ContractError::Config("build-adjustment needs an `adjustment` section".into()))?;
    let adj = adjustment::build_truthful_adjustment(&contract, u2, spec.a_ref)?;
    let fee = adj.fee();
    let mut fee_csv = Vec::new();
    fee.write_csv(&mut fee_csv)?;
    let metadata = adj.metadata();

    let mut results = serde_json::Map::new();
    results.insert("metadata".into(), serde_json::to_value(&metadata)?);
    results.insert("max_abs_fee".into(), json!(fee.max_abs()));
    if cfg.types.is_some() {
        let verification = adjustment::verify_adjustment(&contract, u2, &adj, &cfg.thetas()?)?;
        results.insert("verification".into(), serde_json::to_value(verification)?);
    }
    if let Some(cap) = spec.cap {
        let scan = spec
            .theta_scan
            .ok_or_else(|| ContractError::Config("a finite `cap` needs `adjustment.theta_scan`".into()))?
            .values()?;
        let finite = AdjustmentFunction::finite(cap, fee.clone())?;
        let breakdown = adjustment::finite_penalty_breakdown(&contract, u2, finite.fee(), cap, &scan)?;
        results.insert(
            "finite_penalty".into(),
            json!({
                "cap": cap,
                "scan_step": scan.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
                "breakdown": breakdown,
            }),
        );
    }
    let out = CommandOutput { results: Value::Object(results), files: Vec::new(), validation_failed: false };
    Ok(out
        .with_file("fee.csv", String::from_utf8(fee_csv).expect("CSV output is ASCII"))
        .with_file("adjustment.json", format!("{}\n", serde_json::to_string_pretty(&metadata)?)))
}

struct SweepRow {
    value: f64,
    metrics: Vec<(&'static str, f64)>,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn two_types(cfg: &RunConfig) -> Result<((AgentType, f64), (AgentType, f64))> {
    let types = cfg.require_step_design()?;
    if types.len() != 2 {
        return Err(ContractError::Config("this sweep needs exactly two step_design types".into()));
    }
    Ok(((AgentType::new(types[0].0)?, types[0].1), (AgentType::new(types[1].0)?, types[1].1)))
}

fn sweep(cfg: &RunConfig) -> Result<CommandOutput> {
    let contract = cfg.contract()?;
    let spec = cfg.sweep.as_ref().ok_or_else(|| ContractError::Config("sweep needs a `sweep` section".into()))?;
    let values = spec.range.values()?;
    let rows: Vec<SweepRow> = match spec.parameter {
        SweepParameter::Theta => {
            let u2 = cfg.require_incentive()?;
            values
                .iter()
                .map(|&t| {
                    let r = agent::deviation_search_mh(&contract, u2, AgentType::new(t)?)?;
                    Ok(SweepRow {
                        value: t,
                        metrics: vec![
                            ("truthful_action", r.truthful_action),
                            ("best_deviation", r.best_deviation),
                            ("gain", r.gain),
                            ("truthful", flag(r.truthful)),
                        ],
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepParameter::T => {
            let ((tl, ul), (th, uh)) = two_types(cfg)?;
            let direction = if uh > ul { StepDirection::HighGetsMore } else { StepDirection::LowGetsMore };
            values
                .iter()
                .map(|&t| {
                    let f = truthfulness::step_feasibility(&contract, tl, th, t, direction)?;
                    Ok(SweepRow {
                        value: t,
                        metrics: vec![("rhs_bound", f.rhs_bound), ("feasible", flag(f.is_feasible(ul, uh)?))],
                    })
                })
                .collect::<Result<_>>()?
        }
        SweepParameter::UL => {
            let ((tl, _), (th, uh)) = two_types(cfg)?;
            let range = truthfulness::step_threshold_range(&contract, tl, th)?;
            values
                .iter()
                .map(|&ul| {
                    let direction = if uh > ul { StepDirection::HighGetsMore } else { StepDirection::LowGetsMore };
                    let t = truthfulness::permissive_threshold(range, direction);
                    let f = truthfulness::step_feasibility(&contract, tl, th, t, direction)?;
                    let u2 = IncentiveFunction::step(t, ul, uh)?;
                    let low = agent::deviation_search_mh(&contract, &u2, tl)?;
                    let high = agent::deviation_search_mh(&contract, &u2, th)?;
                    Ok(SweepRow {
                        value: ul,
                        metrics: vec![
                            ("t", t),
                            ("lhs", f.lhs(ul, uh)?),
                            ("rhs_bound", f.rhs_bound),
                            ("feasible", flag(f.is_feasible(ul, uh)?)),
                            ("gain_low", low.gain),
                            ("gain_high", high.gain),
                        ],
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let name = match spec.parameter {
        SweepParameter::Theta => "theta",
        SweepParameter::T => "t",
        SweepParameter::UL => "u_l",
    };
    let table = csv_table(
        "parameter,value,metric,metric_value",
        rows.iter().flat_map(|r| {
            r.metrics
                .iter()
                .map(move |(m, v)| vec![name.to_string(), fmt_sig(r.value), m.to_string(), fmt_sig(*v)])
        }),
    );
    let points: Vec<Value> = rows
        .iter()
        .map(|r| {
            let metrics: serde_json::Map<String, Value> =
                r.metrics.iter().map(|(m, v)| (m.to_string(), json!(v))).collect();
            json!({ "value": r.value, "metrics": metrics })
        })
        .collect();
    Ok(CommandOutput::new(json!({ "parameter": name, "points": points }))?.with_file("sweep.csv", table))
}
