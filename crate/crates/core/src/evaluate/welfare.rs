use serde::{Deserialize, Serialize};

use super::{DispatchCost, DispatchResult, EvaluateError};

/// Market-stage money flows in €.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Procurement {
    /// What the DSO pays for accepted requests (pay-as-bid).
    pub request_payment: f64,
    /// What accepted offers asked for.
    pub offer_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub scenarios: usize,
    /// `request_payment - offer_cost`.
    pub procurement_welfare: f64,
    /// Mean real-time cost per scenario.
    pub realtime: DispatchCost,
    /// Procurement welfare minus mean shedding and curtailment cost.
    pub social_welfare: f64,
    /// Request payment plus mean real-time cost.
    pub dso_cost: f64,
    pub request_payment: f64,
    pub offer_cost: f64,
}

/// Combines one clearing with the dispatches of every scenario
/// (`[scenario][period]`); `expected_scenarios` guards against comparing
/// mechanisms over different scenario sets.
pub fn welfare(
    procurement: &Procurement,
    dispatches: &[Vec<DispatchResult>],
    expected_scenarios: usize,
) -> Result<WelfareReport, EvaluateError> {
    if dispatches.len() != expected_scenarios {
        return Err(EvaluateError::ScenarioCount(dispatches.len(), expected_scenarios));
    }
    let mut sum = DispatchCost::default();
    for scenario in dispatches {
        for d in scenario {
            sum.add(&d.cost);
        }
    }
    let count = dispatches.len().max(1) as f64;
    let realtime =
        DispatchCost { activation: sum.activation / count, shedding: sum.shedding / count, curtailment: sum.curtailment / count };
    let procurement_welfare = procurement.request_payment - procurement.offer_cost;
    Ok(WelfareReport {
        scenarios: dispatches.len(),
        procurement_welfare,
        social_welfare: procurement_welfare - realtime.shedding - realtime.curtailment,
        dso_cost: procurement.request_payment + realtime.total(),
        realtime,
        request_payment: procurement.request_payment,
        offer_cost: procurement.offer_cost,
    })
}
