use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvaluateError;
use crate::chance::line_tag;
use crate::flexreq::BalanceMode;
use crate::grid::{build_path_matrix, PathMatrix, RadialNetwork};
use crate::market::StochasticPrices;
use crate::socp::{solve, ConeProgram, LinExpr, SolveStatus, SolverSettings};
use crate::uncertainty::{ForecastErrorModel, ScenarioSet};

/// Small activation cost (€/MWh) that keeps simultaneous up and down
/// activation out of the optimum when the activation price is zero. It is
/// not part of the reported cost.
const ACTIVATION_TIE_BREAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Deterministic,
    Stochastic,
    #[default]
    None,
}

/// Up/down capacity (MW) per `(bus, period)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcuredFlexibility {
    pub provenance: Provenance,
    pub capacity: BTreeMap<(u32, u32), (f64, f64)>,
}

impl ProcuredFlexibility {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn get(&self, bus: u32, period: u32) -> (f64, f64) {
        self.capacity.get(&(bus, period)).copied().unwrap_or((0.0, 0.0))
    }
}

/// Real-time cost in €.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchCost {
    pub activation: f64,
    pub shedding: f64,
    pub curtailment: f64,
}

impl DispatchCost {
    pub fn total(&self) -> f64 {
        self.activation + self.shedding + self.curtailment
    }

    pub fn add(&mut self, other: &DispatchCost) {
        self.activation += other.activation;
        self.shedding += other.shedding;
        self.curtailment += other.curtailment;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub period: u32,
    /// Signed activation energy per bus (MWh), positive upward.
    pub activation_mwh: Vec<f64>,
    pub shedding_mwh: Vec<f64>,
    pub curtailment_mwh: Vec<f64>,
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: DispatchCost,
}

/// Cheapest real-time correction of one realized scenario.
///
/// `xi` holds the per-source forecast errors in per-unit (positive means
/// missing generation). Activation is limited by the procured capacity;
/// shedding and curtailment are unbounded, so the program is feasible
/// whenever the slack voltage lies within every bus's limits.
#[allow(clippy::too_many_arguments)]
pub fn realtime_dispatch(
    network: &RadialNetwork,
    path: &PathMatrix,
    gamma: &DMatrix<f64>,
    procured: &ProcuredFlexibility,
    period: usize,
    xi: &[f64],
    prices: &StochasticPrices,
    mode: BalanceMode,
    settings: &SolverSettings,
) -> Result<DispatchResult, EvaluateError> {
    let n = network.n_buses();
    let base = network.base_mva();
    let p = &network.periods()[period];
    let (period_id, dt) = (p.id, p.dt_hours);
    let forecast = network.base_injections(period)?;
    let realized: Vec<f64> =
        (0..n).map(|b| forecast[b] - xi.iter().enumerate().map(|(s, x)| gamma[(b, s)] * x).sum::<f64>()).collect();

    let mut prog = ConeProgram::new();
    let mut flex = vec![LinExpr::zero(); n];
    let mut handles = vec![None; n];
    let mut objective = LinExpr::zero();
    let mut balance = LinExpr::zero();
    for bus in network.non_slack() {
        let id = network.buses()[bus].id;
        let (cap_up, cap_down) = procured.get(id, period_id);
        let up = prog.add_nonneg_var(format!("a_up[{id}]"));
        let down = prog.add_nonneg_var(format!("a_down[{id}]"));
        let ns = prog.add_nonneg_var(format!("ns[{id}]"));
        let c = prog.add_nonneg_var(format!("c[{id}]"));
        prog.add_le(format!("cap_up[{id}]"), up, cap_up / base);
        prog.add_le(format!("cap_down[{id}]"), down, cap_down / base);
        flex[bus] = up - down + ns - c;
        balance += flex[bus].clone();
        objective += (up + down) * ((prices.activation + ACTIVATION_TIE_BREAK) * dt * base)
            + ns * (prices.shedding * dt * base)
            + c * (prices.curtailment * dt * base);
        handles[bus] = Some((up, down, ns, c));
    }
    if mode == BalanceMode::DsoResponsible {
        prog.add_eq("balance", balance, xi.iter().sum());
    }

    let k = network.k();
    let mut p_flow = Vec::with_capacity(network.n_lines());
    let mut q_flow = Vec::with_capacity(network.n_lines());
    for l in 0..network.n_lines() {
        let tag = line_tag(network, l);
        let pv = prog.add_var(format!("P[{tag}]"));
        let qv = prog.add_var(format!("Q[{tag}]"));
        let mut pd = LinExpr::from(pv);
        let mut qd = LinExpr::from(qv);
        let (mut rp, mut rq) = (0.0, 0.0);
        for m in path.downstream(l) {
            pd += flex[m].clone();
            qd += flex[m].clone() * k[m];
            rp -= realized[m];
            rq -= k[m] * realized[m];
        }
        prog.add_eq(format!("flow_p[{tag}]"), pd, rp);
        prog.add_eq(format!("flow_q[{tag}]"), qd, rq);
        prog.add_soc(format!("rating[{tag}]"), LinExpr::constant(network.lines()[l].s_rating), vec![pv.into(), qv.into()]);
        p_flow.push(pv);
        q_flow.push(qv);
    }
    let mut u = vec![LinExpr::zero(); n];
    u[network.slack()] = LinExpr::constant(network.slack_u0());
    for &bus in network.order() {
        let Some(l) = network.feeder_line(bus) else { continue };
        let line = &network.lines()[l];
        let b = &network.buses()[bus];
        let uv = prog.add_var(format!("u[{}]", b.id));
        let drop = LinExpr::from(p_flow[l]) * (2.0 * line.r) + LinExpr::from(q_flow[l]) * (2.0 * line.x);
        prog.add_eq(format!("vdrop[{}]", b.id), uv + drop - u[network.line_parent(l)].clone(), 0.0);
        prog.add_le(format!("v_max[{}]", b.id), uv, b.v_max * b.v_max);
        prog.add_ge(format!("v_min[{}]", b.id), uv - b.v_min * b.v_min);
        u[bus] = uv.into();
    }
    prog.set_objective(objective);

    let sol = solve(&prog, settings)?;
    if sol.status != SolveStatus::Optimal {
        return Err(EvaluateError::Dispatch { period: period_id, reason: format!("{:?}", sol.status) });
    }
    let energy = |v: f64| v.max(0.0) * base * dt;
    let mut result = DispatchResult {
        period: period_id,
        activation_mwh: vec![0.0; n],
        shedding_mwh: vec![0.0; n],
        curtailment_mwh: vec![0.0; n],
        p_flow: p_flow.iter().map(|&v| sol.value(v)).collect(),
        q_flow: q_flow.iter().map(|&v| sol.value(v)).collect(),
        u: u.iter().map(|e| sol.eval(e)).collect(),
        cost: DispatchCost::default(),
    };
    for bus in network.non_slack() {
        let (up, down, ns, c) = handles[bus].expect("non-slack bus");
        let (a_up, a_down) = (energy(sol.value(up)), energy(sol.value(down)));
        result.activation_mwh[bus] = a_up - a_down;
        result.shedding_mwh[bus] = energy(sol.value(ns));
        result.curtailment_mwh[bus] = energy(sol.value(c));
        result.cost.activation += prices.activation * (a_up + a_down);
        result.cost.shedding += prices.shedding * result.shedding_mwh[bus];
        result.cost.curtailment += prices.curtailment * result.curtailment_mwh[bus];
    }
    Ok(result)
}

/// Dispatches every scenario in every period; the same scenario row is used
/// for all periods. Results are indexed `[scenario][period]`.
pub fn dispatch_scenarios(
    network: &RadialNetwork,
    model: &ForecastErrorModel,
    procured: &ProcuredFlexibility,
    scenarios: &ScenarioSet,
    prices: &StochasticPrices,
    mode: BalanceMode,
    settings: &SolverSettings,
) -> Result<Vec<Vec<DispatchResult>>, EvaluateError> {
    super::violations::check_sources(model, scenarios)?;
    let path = build_path_matrix(network);
    let gamma = model.incidence(network)?;
    scenarios
        .draws
        .par_iter()
        .map(|xi| {
            (0..network.periods().len())
                .map(|t| realtime_dispatch(network, &path, &gamma, procured, t, xi, prices, mode, settings))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}
