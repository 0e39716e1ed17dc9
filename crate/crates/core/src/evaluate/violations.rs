use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvaluateError;
use crate::chance::line_tag;
use crate::flexreq::FlexRequestSet;
use crate::grid::{lindistflow_solve, RadialNetwork};
use crate::market::StochasticResult;
use crate::uncertainty::{ForecastErrorModel, ScenarioSet};

/// Absolute slack (per-unit, or MW for request bounds) before a sample
/// counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-6;
const MIN_SCENARIOS: usize = 100;

#[derive(Debug, Clone, Copy)]
pub enum PolicySolution<'a> {
    Requests(&'a FlexRequestSet),
    Stochastic(&'a StochasticResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStat {
    pub label: String,
    pub family: String,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStat {
    pub family: String,
    pub max_frequency: f64,
    pub worst: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub samples: usize,
    pub constraints: Vec<ConstraintStat>,
    pub families: Vec<FamilyStat>,
    pub max_frequency: f64,
    pub worst: Option<String>,
}

pub(crate) fn check_sources(model: &ForecastErrorModel, scenarios: &ScenarioSet) -> Result<(), EvaluateError> {
    let expected: Vec<String> = model.sources.iter().map(|s| s.id.clone()).collect();
    if scenarios.source_ids != expected || scenarios.draws.iter().any(|d| d.len() != expected.len()) {
        return Err(EvaluateError::Sources { expected, got: scenarios.source_ids.clone() });
    }
    Ok(())
}

/// One-sided bounds on a policy quantity `nominal + alpha · 1ᵀξ` (MW).
struct PolicyCheck {
    label: String,
    family: &'static str,
    nominal: f64,
    alpha: f64,
    lower: Option<f64>,
    upper: Option<f64>,
}

/// Per-bus controllable injection (p.u.) and its response to the total error.
type Policy = (Vec<f64>, Vec<f64>);

fn policy_for_period(
    network: &RadialNetwork,
    solution: PolicySolution<'_>,
    period_id: u32,
    checks: &mut Vec<PolicyCheck>,
) -> Result<Policy, EvaluateError> {
    let n = network.n_buses();
    let base = network.base_mva();
    let mut ctrl = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    for bus in network.non_slack() {
        let id = network.buses()[bus].id;
        let missing = EvaluateError::MissingNode { bus: id, period: period_id };
        match solution {
            PolicySolution::Requests(set) => {
                let r = set.get(id, period_id).ok_or(missing)?;
                ctrl[bus] = r.nominal_mw / base;
                alpha[bus] = r.alpha;
                checks.push(PolicyCheck {
                    label: format!("request_up[{id}]"),
                    family: "activation_high",
                    nominal: r.nominal_mw,
                    alpha: r.alpha,
                    lower: None,
                    upper: Some(r.up_mw),
                });
                checks.push(PolicyCheck {
                    label: format!("request_down[{id}]"),
                    family: "activation_low",
                    nominal: r.nominal_mw,
                    alpha: r.alpha,
                    lower: Some(-r.down_mw),
                    upper: None,
                });
            }
            PolicySolution::Stochastic(res) => {
                let p = res.node(id, period_id).ok_or(missing)?;
                ctrl[bus] = (p.p_a_mw + p.p_ns_mw - p.p_c_mw) / base;
                alpha[bus] = p.alpha();
                checks.push(PolicyCheck {
                    label: format!("act_up[{id}]"),
                    family: "activation_high",
                    nominal: p.p_a_mw,
                    alpha: p.alpha_a,
                    lower: None,
                    upper: Some(p.up_capacity_mw),
                });
                checks.push(PolicyCheck {
                    label: format!("act_down[{id}]"),
                    family: "activation_low",
                    nominal: p.p_a_mw,
                    alpha: p.alpha_a,
                    lower: Some(-p.down_capacity_mw),
                    upper: None,
                });
                checks.push(PolicyCheck {
                    label: format!("ns_nonneg[{id}]"),
                    family: "shedding",
                    nominal: p.p_ns_mw,
                    alpha: p.alpha_ns,
                    lower: Some(0.0),
                    upper: None,
                });
                checks.push(PolicyCheck {
                    label: format!("c_nonneg[{id}]"),
                    family: "curtailment",
                    nominal: p.p_c_mw,
                    alpha: p.alpha_c,
                    lower: Some(0.0),
                    upper: None,
                });
            }
        }
    }
    Ok((ctrl, alpha))
}

/// Applies the solved affine policies to every scenario and counts how often
/// each original constraint is violated.
///
/// Families: `rating`, `v_low`, `v_high`, `activation_high`,
/// `activation_low`, and for the stochastic clearing `shedding` and
/// `curtailment` nonnegativity. Labels carry a `@t<period>` suffix when the
/// network has more than one period.
pub fn out_of_sample(
    solution: PolicySolution<'_>,
    network: &RadialNetwork,
    model: &ForecastErrorModel,
    scenarios: &ScenarioSet,
) -> Result<ViolationReport, EvaluateError> {
    check_sources(model, scenarios)?;
    if scenarios.count() < MIN_SCENARIOS {
        return Err(EvaluateError::TooFewScenarios { needed: MIN_SCENARIOS, got: scenarios.count() });
    }
    let gamma = model.incidence(network)?;
    let n = network.n_buses();
    let base = network.base_mva();
    let multi = network.periods().len() > 1;
    let mut stats: Vec<(String, &'static str, usize)> = Vec::new();

    for (t, period) in network.periods().iter().enumerate() {
        let suffix = if multi { format!("@t{}", period.id) } else { String::new() };
        let mut checks = Vec::new();
        let (ctrl, alpha) = policy_for_period(network, solution, period.id, &mut checks)?;
        let forecast = network.base_injections(t)?;

        let first = stats.len();
        for l in 0..network.n_lines() {
            stats.push((format!("rating[{}]{suffix}", line_tag(network, l)), "rating", 0));
        }
        let bus_first = stats.len();
        for bus in network.non_slack() {
            let id = network.buses()[bus].id;
            stats.push((format!("v_low[{id}]{suffix}"), "v_low", 0));
            stats.push((format!("v_high[{id}]{suffix}"), "v_high", 0));
        }
        let policy_first = stats.len();
        for c in &checks {
            stats.push((format!("{}{suffix}", c.label), c.family, 0));
        }

        for xi in &scenarios.draws {
            let total: f64 = xi.iter().sum();
            let inj: Vec<f64> = (0..n)
                .map(|b| forecast[b] - xi.iter().enumerate().map(|(s, x)| gamma[(b, s)] * x).sum::<f64>())
                .collect();
            let flex: Vec<f64> = (0..n).map(|b| ctrl[b] + alpha[b] * total).collect();
            let flow = lindistflow_solve(network, &inj, &flex)?;
            for (l, line) in network.lines().iter().enumerate() {
                if flow.p_flow[l].hypot(flow.q_flow[l]) > line.s_rating + VIOLATION_TOL {
                    stats[first + l].2 += 1;
                }
            }
            for (i, bus) in network.non_slack().enumerate() {
                let b = &network.buses()[bus];
                if flow.u[bus] < b.v_min * b.v_min - VIOLATION_TOL {
                    stats[bus_first + 2 * i].2 += 1;
                }
                if flow.u[bus] > b.v_max * b.v_max + VIOLATION_TOL {
                    stats[bus_first + 2 * i + 1].2 += 1;
                }
            }
            for (i, c) in checks.iter().enumerate() {
                let v = c.nominal + c.alpha * total * base;
                let low = c.lower.is_some_and(|lo| v < lo - VIOLATION_TOL);
                let high = c.upper.is_some_and(|hi| v > hi + VIOLATION_TOL);
                if low || high {
                    stats[policy_first + i].2 += 1;
                }
            }
        }
    }

    let samples = scenarios.count();
    let constraints: Vec<ConstraintStat> = stats
        .into_iter()
        .map(|(label, family, hits)| ConstraintStat {
            label,
            family: family.to_owned(),
            frequency: hits as f64 / samples as f64,
        })
        .collect();
    let mut families: BTreeMap<&str, FamilyStat> = BTreeMap::new();
    for c in &constraints {
        let f = families.entry(c.family.as_str()).or_insert_with(|| FamilyStat {
            family: c.family.clone(),
            max_frequency: 0.0,
            worst: None,
        });
        if c.frequency > f.max_frequency {
            f.max_frequency = c.frequency;
            f.worst = Some(c.label.clone());
        }
    }
    let families: Vec<FamilyStat> = families.into_values().collect();
    let worst = families.iter().filter(|f| f.max_frequency > 0.0).max_by(|a, b| {
        a.max_frequency.total_cmp(&b.max_frequency).then_with(|| b.family.cmp(&a.family))
    });
    Ok(ViolationReport {
        samples,
        max_frequency: worst.map_or(0.0, |f| f.max_frequency),
        worst: worst.and_then(|f| f.worst.clone()),
        constraints,
        families,
    })
}
