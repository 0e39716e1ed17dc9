use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bid, BidKind, Direction, MarketError};
use crate::chance::{add_network_block, NetworkVars, UncertaintyContext};
use crate::flexreq::{elastic_diagnosis, BalanceMode, FlexReqError, PeriodSummary, ELASTIC_PENALTY, SNAP_PU};
use crate::grid::{build_path_matrix, PathMatrix, RadialNetwork};
use crate::socp::{solve, ConeProgram, LinExpr, SolveStatus, SolverSettings, VarId};
use crate::uncertainty::{EpsilonConfig, ForecastErrorModel};

/// How the expected activation cost enters the objective.
pub const ACTIVATION_COST_MODEL: &str =
    "upper bound: lambda_A * sqrt(p_A^2 + sigma_tot^2 * alpha_A^2) >= lambda_A * E|p_A + alpha_A * xi_tot|";

/// Real-time prices in €/MWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticPrices {
    pub activation: f64,
    pub shedding: f64,
    pub curtailment: f64,
}

impl Default for StochasticPrices {
    fn default() -> Self {
        Self { activation: 0.0, shedding: 200.0, curtailment: 60.0 }
    }
}

#[derive(Debug, Clone)]
pub struct StochasticProblem {
    pub network: RadialNetwork,
    pub model: ForecastErrorModel,
    pub epsilons: EpsilonConfig,
    pub mode: BalanceMode,
    pub offers: Vec<Bid>,
    pub prices: StochasticPrices,
}

/// Handles of one period's program; per-bus entries are `None` at the slack.
#[derive(Debug, Clone)]
pub struct StochasticVars {
    pub offers: Vec<(u64, VarId)>,
    /// Offered capacity bought per bus, as expressions of the offer variables.
    pub cap_up: Vec<LinExpr>,
    pub cap_down: Vec<LinExpr>,
    pub p_a: Vec<Option<VarId>>,
    pub p_ns: Vec<Option<VarId>>,
    pub p_c: Vec<Option<VarId>>,
    pub alpha_a: Vec<Option<VarId>>,
    pub alpha_ns: Vec<Option<VarId>>,
    pub alpha_c: Vec<Option<VarId>>,
    /// Activation-cost epigraph variables (only when the price is positive).
    pub w: Vec<Option<VarId>>,
    pub network: NetworkVars,
    /// Objective parts in €.
    pub procurement: LinExpr,
    pub activation: LinExpr,
    pub shedding: LinExpr,
    pub curtailment: LinExpr,
}

fn period_offers(problem: &StochasticProblem, period_id: u32) -> impl Iterator<Item = &Bid> {
    problem.offers.iter().filter(move |o| o.period == period_id && o.kind == BidKind::Offer)
}

fn validate_offers(problem: &StochasticProblem) -> Result<(), MarketError> {
    let mut ids = std::collections::BTreeSet::new();
    for o in &problem.offers {
        if o.kind != BidKind::Offer {
            return Err(MarketError::Kind { id: o.id, expected: BidKind::Offer });
        }
        if !(o.quantity_mw >= 0.0) || !o.quantity_mw.is_finite() {
            return Err(MarketError::Quantity { id: o.id, quantity: o.quantity_mw });
        }
        if !ids.insert(o.id) {
            return Err(MarketError::DuplicateBid(o.id));
        }
        if problem.network.bus_index(o.bus).is_none() {
            return Err(MarketError::BusNotInZone { id: o.id, bus: o.bus });
        }
    }
    Ok(())
}

fn build(
    problem: &StochasticProblem,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    elastic: bool,
) -> Result<(ConeProgram, StochasticVars), MarketError> {
    let net = &problem.network;
    let n = net.n_buses();
    let base = net.base_mva();
    let dt = net.periods()[period].dt_hours;
    let period_id = net.periods()[period].id;
    let mut prog = ConeProgram::new();

    let mut offers = Vec::new();
    let mut cap_up = vec![LinExpr::zero(); n];
    let mut cap_down = vec![LinExpr::zero(); n];
    let mut procurement = LinExpr::zero();
    for o in period_offers(problem, period_id) {
        let v = prog.add_nonneg_var(format!("pO[{}]", o.id));
        prog.add_le(format!("offer_max[{}]", o.id), v, o.quantity_mw / base);
        let bus = net.bus_index(o.bus).expect("validated");
        match o.direction {
            Direction::Up => cap_up[bus] += v.into(),
            Direction::Down => cap_down[bus] += v.into(),
        }
        procurement += v * (o.price_eur_per_mw * base);
        offers.push((o.id, v));
    }

    let none = vec![None; n];
    let mut vars = StochasticVars {
        offers,
        cap_up,
        cap_down,
        p_a: none.clone(),
        p_ns: none.clone(),
        p_c: none.clone(),
        alpha_a: none.clone(),
        alpha_ns: none.clone(),
        alpha_c: none.clone(),
        w: none,
        network: NetworkVars { p_flow: vec![], q_flow: vec![], k_p: vec![], k_q: vec![], u: vec![], elastic: vec![] },
        procurement,
        activation: LinExpr::zero(),
        shedding: LinExpr::zero(),
        curtailment: LinExpr::zero(),
    };

    let lv = &ctx.levels;
    let prices = &problem.prices;
    let mut ctrl = vec![LinExpr::zero(); n];
    let mut alpha = vec![LinExpr::zero(); n];
    let mut alpha_sum = LinExpr::zero();
    for bus in net.non_slack() {
        let id = net.buses()[bus].id;
        let p_a = prog.add_var(format!("pA[{id}]"));
        let p_ns = prog.add_var(format!("pNS[{id}]"));
        let p_c = prog.add_var(format!("pC[{id}]"));
        let a_a = prog.add_var(format!("alphaA[{id}]"));
        let a_ns = prog.add_var(format!("alphaNS[{id}]"));
        let a_c = prog.add_var(format!("alphaC[{id}]"));

        // activation stays within the procured capacity
        let m_a = ctx.total_margin(lv.activation, a_a);
        prog.add_soc(format!("act_up[{id}]"), vars.cap_up[bus].clone() - p_a, m_a.clone());
        prog.add_soc(format!("act_down[{id}]"), vars.cap_down[bus].clone() + p_a, m_a);
        // shedding and curtailment stay nonnegative
        prog.add_soc(format!("ns_nonneg[{id}]"), p_ns, ctx.total_margin(lv.shedding, a_ns));
        prog.add_soc(format!("c_nonneg[{id}]"), p_c, ctx.total_margin(lv.curtailment, a_c));

        if prices.activation > 0.0 {
            let w = prog.add_var(format!("w[{id}]"));
            prog.add_soc(format!("act_cost[{id}]"), w, vec![p_a.into(), LinExpr::from(a_a) * ctx.sigma_tot]);
            vars.activation += w * (prices.activation * dt * base);
            vars.w[bus] = Some(w);
        }
        vars.shedding += p_ns * (prices.shedding * dt * base);
        vars.curtailment += p_c * (prices.curtailment * dt * base);

        ctrl[bus] = p_a + p_ns - p_c;
        alpha[bus] = a_a + a_ns - a_c;
        alpha_sum += alpha[bus].clone();
        vars.p_a[bus] = Some(p_a);
        vars.p_ns[bus] = Some(p_ns);
        vars.p_c[bus] = Some(p_c);
        vars.alpha_a[bus] = Some(a_a);
        vars.alpha_ns[bus] = Some(a_ns);
        vars.alpha_c[bus] = Some(a_c);
    }
    prog.add_eq("alpha_sum", alpha_sum, problem.mode.alpha_sum());
    vars.network = add_network_block(&mut prog, net, path, ctx, period, &ctrl, &alpha, elastic)?;

    let mut objective =
        vars.procurement.clone() + vars.activation.clone() + vars.shedding.clone() + vars.curtailment.clone();
    if elastic {
        objective += vars.network.elastic_total() * ELASTIC_PENALTY;
    }
    prog.set_objective(objective);
    Ok((prog, vars))
}

/// Builds the stochastic clearing program for one period.
pub fn build_stochastic_program(
    problem: &StochasticProblem,
    period: usize,
) -> Result<(ConeProgram, StochasticVars), MarketError> {
    problem.epsilons.validate()?;
    validate_offers(problem)?;
    let path = build_path_matrix(&problem.network);
    let ctx = UncertaintyContext::new(&problem.network, &problem.model, &problem.epsilons)?;
    build(problem, &path, &ctx, period, false)
}

/// Policy and nominal set-points at one bus and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePolicy {
    pub bus: u32,
    pub period: u32,
    pub up_capacity_mw: f64,
    pub down_capacity_mw: f64,
    pub p_a_mw: f64,
    pub p_ns_mw: f64,
    pub p_c_mw: f64,
    pub alpha_a: f64,
    pub alpha_ns: f64,
    pub alpha_c: f64,
}

impl NodePolicy {
    /// Controllable injection response to the total error.
    pub fn alpha(&self) -> f64 {
        self.alpha_a + self.alpha_ns - self.alpha_c
    }
}

/// Expected cost split in €.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub procurement: f64,
    pub activation_bound: f64,
    pub shedding: f64,
    pub curtailment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticResult {
    pub base_mva: f64,
    pub mode: BalanceMode,
    /// Accepted MW per offer id (zero entries omitted).
    pub accepted: BTreeMap<u64, f64>,
    pub nodes: Vec<NodePolicy>,
    pub costs: CostBreakdown,
    pub activation_cost_model: String,
    pub periods: Vec<PeriodSummary>,
}

impl StochasticResult {
    pub fn accepted_mw(&self, id: u64) -> f64 {
        self.accepted.get(&id).copied().unwrap_or(0.0)
    }

    pub fn node(&self, bus: u32, period: u32) -> Option<&NodePolicy> {
        self.nodes.iter().find(|p| p.bus == bus && p.period == period)
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() < SNAP_PU {
        0.0
    } else {
        v
    }
}

type PeriodOutcome = (Vec<(u64, f64)>, Vec<NodePolicy>, CostBreakdown, PeriodSummary);

fn solve_period(
    problem: &StochasticProblem,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    settings: &SolverSettings,
) -> Result<PeriodOutcome, MarketError> {
    let net = &problem.network;
    let period_id = net.periods()[period].id;
    let (prog, vars) = build(problem, path, ctx, period, false)?;
    let sol = solve(&prog, settings)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let (eprog, evars) = build(problem, path, ctx, period, true)?;
            let esol = solve(&eprog, settings)?;
            let diagnosis = if esol.is_optimal() {
                elastic_diagnosis(&evars.network, &esol.values)
            } else {
                crate::flexreq::Diagnosis { family: "unknown".into(), relaxed: vec![] }
            };
            return Err(FlexReqError::Infeasible { period: period_id, diagnosis }.into());
        }
        status => {
            return Err(FlexReqError::Solver { period: period_id, status, residuals: sol.residuals }.into());
        }
    }
    let base = net.base_mva();
    let accepted: Vec<(u64, f64)> = vars
        .offers
        .iter()
        .map(|&(id, v)| (id, snap(sol.value(v).max(0.0)) * base))
        .filter(|&(_, q)| q > 0.0)
        .collect();
    // Priced from the reported volumes so that cost and acceptance agree.
    let procurement: f64 = accepted
        .iter()
        .map(|&(id, q)| q * problem.offers.iter().find(|o| o.id == id).map_or(0.0, |o| o.price_eur_per_mw))
        .sum();
    let nodes = net
        .non_slack()
        .map(|bus| {
            let val = |v: &Option<VarId>| sol.value(v.expect("non-slack bus has policy variables"));
            NodePolicy {
                bus: net.buses()[bus].id,
                period: period_id,
                up_capacity_mw: snap(sol.eval(&vars.cap_up[bus])) * base,
                down_capacity_mw: snap(sol.eval(&vars.cap_down[bus])) * base,
                p_a_mw: snap(val(&vars.p_a[bus])) * base,
                p_ns_mw: snap(val(&vars.p_ns[bus])) * base,
                p_c_mw: snap(val(&vars.p_c[bus])) * base,
                alpha_a: val(&vars.alpha_a[bus]),
                alpha_ns: val(&vars.alpha_ns[bus]),
                alpha_c: val(&vars.alpha_c[bus]),
            }
        })
        .collect();
    let (activation, shedding, curtailment) =
        (sol.eval(&vars.activation), sol.eval(&vars.shedding), sol.eval(&vars.curtailment));
    let costs = CostBreakdown {
        procurement,
        activation_bound: activation,
        shedding,
        curtailment,
        total: procurement + activation + shedding + curtailment,
    };
    let summary = PeriodSummary {
        period: period_id,
        volume_mw: accepted.iter().map(|&(_, q)| q).sum(),
        iterations: sol.iterations,
        primal_residual: sol.residuals.primal_eq,
        cone_residual: sol.residuals.cone,
        duality_gap: sol.residuals.duality_gap,
    };
    Ok((accepted, nodes, costs, summary))
}

/// Solves every period and collects accepted offers and policies.
pub fn clear_stochastic(problem: &StochasticProblem, settings: &SolverSettings) -> Result<StochasticResult, MarketError> {
    problem.epsilons.validate()?;
    validate_offers(problem)?;
    let path = build_path_matrix(&problem.network);
    let ctx = UncertaintyContext::new(&problem.network, &problem.model, &problem.epsilons)?;
    let outcomes = (0..problem.network.periods().len())
        .into_par_iter()
        .map(|t| solve_period(problem, &path, &ctx, t, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let mut result = StochasticResult {
        base_mva: problem.network.base_mva(),
        mode: problem.mode,
        accepted: BTreeMap::new(),
        nodes: Vec::new(),
        costs: CostBreakdown::default(),
        activation_cost_model: ACTIVATION_COST_MODEL.to_owned(),
        periods: Vec::new(),
    };
    for (accepted, nodes, costs, summary) in outcomes {
        result.accepted.extend(accepted);
        result.nodes.extend(nodes);
        result.costs.procurement += costs.procurement;
        result.costs.activation_bound += costs.activation_bound;
        result.costs.shedding += costs.shedding;
        result.costs.curtailment += costs.curtailment;
        result.costs.total += costs.total;
        result.periods.push(summary);
    }
    Ok(result)
}
