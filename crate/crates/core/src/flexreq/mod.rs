//! Chance-constrained creation of flexibility requests.
//!
//! For every period the DSO solves a SOC-OPF that sizes the smallest upward
//! and downward request per bus such that the network stays within limits
//! under Gaussian forecast errors, with an affine activation policy `α`.

mod io;

pub use io::{read_request_set_json, write_request_book_json, write_request_set_json, RequestEntry};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chance::{add_network_block, NetworkVars, UncertaintyContext};
use crate::grid::{build_path_matrix, GridError, PathMatrix, RadialNetwork};
use crate::socp::{solve, ConeProgram, LinExpr, Residuals, SocpError, SolveStatus, SolverSettings, VarId};
use crate::uncertainty::{EpsilonConfig, ForecastErrorModel, UncertaintyError};

/// Quantities below this (per-unit) are reported as exactly zero.
pub const SNAP_PU: f64 = 1e-7;
/// Penalty per unit of elastic slack in the diagnosis solve.
pub const ELASTIC_PENALTY: f64 = 1e6;

#[derive(Debug, Error)]
pub enum FlexReqError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Socp(#[from] SocpError),
    #[error("period {period} is infeasible: {diagnosis}")]
    Infeasible { period: u32, diagnosis: Diagnosis },
    #[error("solver stopped with {status:?} in period {period} (residuals {residuals:?})")]
    Solver { period: u32, status: SolveStatus, residuals: Residuals },
    #[error("flexibility volume must be positive, got {0}")]
    FlexVolume(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

/// Who compensates the total forecast error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Activated flexibility nets to the total error: `Σα = 1`.
    DsoResponsible,
    /// Activations net to zero and the slack bus absorbs the error: `Σα = 0`.
    #[default]
    NotResponsible,
}

impl BalanceMode {
    pub fn alpha_sum(self) -> f64 {
        match self {
            BalanceMode::DsoResponsible => 1.0,
            BalanceMode::NotResponsible => 0.0,
        }
    }
}

/// One constraint relaxed by the elastic diagnosis solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relaxation {
    pub label: String,
    pub amount_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnosis {
    /// Family of the largest relaxation, e.g. `rating` or `v_min`.
    pub family: String,
    /// Relaxed constraints, largest first.
    pub relaxed: Vec<Relaxation>,
}

impl std::fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} limits cannot be met", self.family)?;
        for r in self.relaxed.iter().take(3) {
            write!(f, "; {} short by {:.6} p.u.", r.label, r.amount_pu)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlexRequestProblem {
    pub network: RadialNetwork,
    pub model: ForecastErrorModel,
    pub epsilons: EpsilonConfig,
    pub mode: BalanceMode,
    /// Adds `1e-6 · depth(n)` per unit of request to make the location of
    /// otherwise equivalent requests reproducible across solvers.
    pub tie_break: bool,
}

impl FlexRequestProblem {
    pub fn new(network: RadialNetwork, model: ForecastErrorModel, epsilons: EpsilonConfig) -> Self {
        Self { network, model, epsilons, mode: BalanceMode::default(), tie_break: false }
    }
}

/// Handles of the request variables; slack-bus entries are `None`.
#[derive(Debug, Clone)]
pub struct RequestVars {
    pub up: Vec<Option<VarId>>,
    pub down: Vec<Option<VarId>>,
    pub nominal: Vec<Option<VarId>>,
    pub alpha: Vec<Option<VarId>>,
    pub network: NetworkVars,
}

fn build(
    problem: &FlexRequestProblem,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    elastic: bool,
) -> Result<(ConeProgram, RequestVars), FlexReqError> {
    let net = &problem.network;
    let n = net.n_buses();
    let mut prog = ConeProgram::new();
    let mut vars = RequestVars {
        up: vec![None; n],
        down: vec![None; n],
        nominal: vec![None; n],
        alpha: vec![None; n],
        network: NetworkVars {
            p_flow: vec![],
            q_flow: vec![],
            k_p: vec![],
            k_q: vec![],
            u: vec![],
            elastic: vec![],
        },
    };
    let mut objective = LinExpr::zero();
    let mut alpha_sum = LinExpr::zero();
    for bus in net.non_slack() {
        let id = net.buses()[bus].id;
        let up = prog.add_nonneg_var(format!("PR_up[{id}]"));
        let down = prog.add_nonneg_var(format!("PR_down[{id}]"));
        let nominal = prog.add_var(format!("PR[{id}]"));
        let alpha = prog.add_var(format!("alpha[{id}]"));
        let weight = if problem.tie_break { 1.0 + 1e-6 * net.depth(bus) as f64 } else { 1.0 };
        objective += (up + down) * weight;
        alpha_sum += alpha.into();
        // P^R + Ω^R ≤ P^R+ and P^R - Ω^R ≥ -P^R-
        let margin = ctx.total_margin(ctx.levels.request, alpha);
        prog.add_soc(format!("req_up[{id}]"), up - nominal, margin.clone());
        prog.add_soc(format!("req_down[{id}]"), down + nominal, margin);
        vars.up[bus] = Some(up);
        vars.down[bus] = Some(down);
        vars.nominal[bus] = Some(nominal);
        vars.alpha[bus] = Some(alpha);
    }
    prog.add_eq("alpha_sum", alpha_sum, problem.mode.alpha_sum());

    let opt = |v: &Option<VarId>| v.map_or_else(LinExpr::zero, LinExpr::from);
    let ctrl: Vec<LinExpr> = vars.nominal.iter().map(opt).collect();
    let alpha: Vec<LinExpr> = vars.alpha.iter().map(opt).collect();
    vars.network = add_network_block(&mut prog, net, path, ctx, period, &ctrl, &alpha, elastic)?;
    if elastic {
        objective += vars.network.elastic_total() * ELASTIC_PENALTY;
    }
    prog.set_objective(objective);
    Ok((prog, vars))
}

/// Builds the request-creation program for one period.
pub fn build_flexreq_program(
    problem: &FlexRequestProblem,
    period: usize,
) -> Result<(ConeProgram, RequestVars), FlexReqError> {
    problem.epsilons.validate()?;
    let path = build_path_matrix(&problem.network);
    let ctx = UncertaintyContext::new(&problem.network, &problem.model, &problem.epsilons)?;
    build(problem, &path, &ctx, period, false)
}

/// Requests at one bus and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRequest {
    pub bus: u32,
    pub period: u32,
    pub up_mw: f64,
    pub down_mw: f64,
    pub alpha: f64,
    /// Nominal activation `P^R` (MW).
    pub nominal_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period: u32,
    pub volume_mw: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub cone_residual: f64,
    pub duality_gap: f64,
}

/// Solved requests for every non-slack bus and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexRequestSet {
    pub base_mva: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub mode: BalanceMode,
    pub requests: Vec<NodeRequest>,
    pub periods: Vec<PeriodSummary>,
}

impl FlexRequestSet {
    pub fn total_volume_mw(&self) -> f64 {
        self.requests.iter().map(|r| r.up_mw + r.down_mw).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.iter().all(|r| r.up_mw == 0.0 && r.down_mw == 0.0)
    }

    pub fn get(&self, bus: u32, period: u32) -> Option<&NodeRequest> {
        self.requests.iter().find(|r| r.bus == bus && r.period == period)
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() < SNAP_PU {
        0.0
    } else {
        v
    }
}

fn diagnose(
    problem: &FlexRequestProblem,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    settings: &SolverSettings,
) -> Result<Diagnosis, FlexReqError> {
    let (prog, vars) = build(problem, path, ctx, period, true)?;
    let sol = solve(&prog, settings)?;
    if !sol.is_optimal() {
        return Ok(Diagnosis { family: "unknown".into(), relaxed: vec![] });
    }
    Ok(elastic_diagnosis(&vars.network, &sol.values))
}

pub(crate) fn elastic_diagnosis(net: &NetworkVars, values: &[f64]) -> Diagnosis {
    let mut relaxed: Vec<Relaxation> = net
        .elastic
        .iter()
        .map(|(v, label)| Relaxation { label: label.clone(), amount_pu: values[v.index()] })
        .filter(|r| r.amount_pu > SNAP_PU)
        .collect();
    relaxed.sort_by(|a, b| b.amount_pu.total_cmp(&a.amount_pu).then_with(|| a.label.cmp(&b.label)));
    let family = relaxed
        .first()
        .map_or("unknown", |r| r.label.split('[').next().unwrap_or("unknown"))
        .to_owned();
    Diagnosis { family, relaxed }
}

fn solve_period(
    problem: &FlexRequestProblem,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    settings: &SolverSettings,
) -> Result<(Vec<NodeRequest>, PeriodSummary), FlexReqError> {
    let net = &problem.network;
    let period_id = net.periods()[period].id;
    let (prog, vars) = build(problem, path, ctx, period, false)?;
    let sol = solve(&prog, settings)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let diagnosis = diagnose(problem, path, ctx, period, settings)?;
            return Err(FlexReqError::Infeasible { period: period_id, diagnosis });
        }
        status => return Err(FlexReqError::Solver { period: period_id, status, residuals: sol.residuals }),
    }
    let base = net.base_mva();
    let requests: Vec<NodeRequest> = net
        .non_slack()
        .map(|bus| {
            let value = |v: &Option<VarId>| sol.value(v.expect("non-slack bus has request variables"));
            NodeRequest {
                bus: net.buses()[bus].id,
                period: period_id,
                up_mw: snap(value(&vars.up[bus]).max(0.0)) * base,
                down_mw: snap(value(&vars.down[bus]).max(0.0)) * base,
                alpha: value(&vars.alpha[bus]),
                nominal_mw: snap(value(&vars.nominal[bus])) * base,
            }
        })
        .collect();
    let summary = PeriodSummary {
        period: period_id,
        volume_mw: requests.iter().map(|r| r.up_mw + r.down_mw).sum(),
        iterations: sol.iterations,
        primal_residual: sol.residuals.primal_eq,
        cone_residual: sol.residuals.cone,
        duality_gap: sol.residuals.duality_gap,
    };
    Ok((requests, summary))
}

/// Solves every period and attaches the given request prices (€/MW).
pub fn create_flexrequests(
    problem: &FlexRequestProblem,
    prices: (f64, f64),
    settings: &SolverSettings,
) -> Result<FlexRequestSet, FlexReqError> {
    problem.epsilons.validate()?;
    let path = build_path_matrix(&problem.network);
    let ctx = UncertaintyContext::new(&problem.network, &problem.model, &problem.epsilons)?;
    let per_period = (0..problem.network.periods().len())
        .into_par_iter()
        .map(|t| solve_period(problem, &path, &ctx, t, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let mut requests = Vec::new();
    let mut periods = Vec::new();
    for (r, s) in per_period {
        requests.extend(r);
        periods.push(s);
    }
    Ok(FlexRequestSet {
        base_mva: problem.network.base_mva(),
        lambda_up: prices.0,
        lambda_down: prices.1,
        mode: problem.mode,
        requests,
        periods,
    })
}

/// Request price from avoided long-term cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSignal {
    /// €/MW when `p_flex` is in MW.
    pub value: f64,
    pub warning: Option<String>,
}

/// `(c_inv - c_noinv) / p_flex`.
pub fn price_discovery(c_inv: f64, c_noinv: f64, p_flex: f64) -> Result<PriceSignal, FlexReqError> {
    if !(p_flex > 0.0) {
        return Err(FlexReqError::FlexVolume(p_flex));
    }
    let value = (c_inv - c_noinv) / p_flex;
    let warning = (value < 0.0).then(|| "negative price: flexibility is not valuable here".to_owned());
    Ok(PriceSignal { value, warning })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid::testing::{bus, line, network};
    use crate::uncertainty::Source;
    use nalgebra::DMatrix;

    /// Chain 0-1-2 with 1.2 p.u. of generation at bus 2 against a 1.0 p.u.
    /// rating on line 1-2; only bus 2 can relieve that line.
    pub(crate) fn overloaded_chain() -> RadialNetwork {
        let mut lines = vec![line(0, 1), line(1, 2)];
        lines[0].s_rating = 5.0;
        lines[1].s_rating = 1.0;
        let mut net = network(vec![bus(0, 0.0, true), bus(1, 0.0, false), bus(2, 1.2, false)], lines);
        for b in &mut net.buses {
            b.v_min = 0.5;
            b.v_max = 1.5;
        }
        RadialNetwork::new(net).unwrap()
    }

    fn no_uncertainty() -> ForecastErrorModel {
        ForecastErrorModel::new(vec![], DMatrix::zeros(0, 0)).unwrap()
    }

    fn wind_at(bus: u32, var: f64) -> ForecastErrorModel {
        ForecastErrorModel::new(vec![Source { id: "w".into(), bus }], DMatrix::from_element(1, 1, var)).unwrap()
    }

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn feasible_base_without_uncertainty_needs_no_requests() {
        let net = RadialNetwork::new(crate::grid::testing::chain(4)).unwrap();
        let problem = FlexRequestProblem::new(net, no_uncertainty(), EpsilonConfig::default());
        let set = create_flexrequests(&problem, (70.0, 40.0), &settings()).unwrap();
        assert!(set.is_empty(), "{set:?}");
        assert_eq!(set.requests.len(), 3);
    }

    #[test]
    fn overload_is_relieved_by_downstream_down_request() {
        let problem = FlexRequestProblem::new(overloaded_chain(), no_uncertainty(), EpsilonConfig::default());
        let set = create_flexrequests(&problem, (70.0, 40.0), &settings()).unwrap();
        let r2 = set.get(2, 0).unwrap();
        assert!((r2.down_mw - 0.2).abs() < 1e-6, "{r2:?}");
        assert_eq!(r2.up_mw, 0.0);
        assert_eq!(set.get(1, 0).unwrap().down_mw, 0.0);
    }

    #[test]
    fn uncertainty_only_increases_the_request_volume() {
        let base = FlexRequestProblem::new(overloaded_chain(), no_uncertainty(), EpsilonConfig::default());
        let v0 = create_flexrequests(&base, (70.0, 40.0), &settings()).unwrap().total_volume_mw();
        let risky = FlexRequestProblem::new(overloaded_chain(), wind_at(2, 0.01), EpsilonConfig::default());
        let v1 = create_flexrequests(&risky, (70.0, 40.0), &settings()).unwrap().total_volume_mw();
        assert!(v1 >= v0 - 1e-7, "{v1} < {v0}");
        assert!(v1 > v0 + 1e-3);
    }

    #[test]
    fn alpha_sum_follows_balance_mode() {
        for mode in [BalanceMode::DsoResponsible, BalanceMode::NotResponsible] {
            let mut problem = FlexRequestProblem::new(overloaded_chain(), wind_at(2, 0.01), EpsilonConfig::default());
            problem.mode = mode;
            let set = create_flexrequests(&problem, (70.0, 40.0), &settings()).unwrap();
            let sum: f64 = set.requests.iter().map(|r| r.alpha).sum();
            assert!((sum - mode.alpha_sum()).abs() < 1e-8, "{mode:?}: {sum}");
        }
    }

    #[test]
    fn request_bounds_cover_the_margin() {
        let mut problem = FlexRequestProblem::new(overloaded_chain(), wind_at(2, 0.01), EpsilonConfig::default());
        problem.mode = BalanceMode::DsoResponsible;
        let set = create_flexrequests(&problem, (70.0, 40.0), &settings()).unwrap();
        let ctx = UncertaintyContext::new(&problem.network, &problem.model, &problem.epsilons).unwrap();
        for r in &set.requests {
            let omega = ctx.levels.request * ctx.sigma_tot * r.alpha.abs();
            assert!(r.nominal_mw + omega <= r.up_mw + 1e-6, "{r:?}");
            assert!(r.nominal_mw - omega >= -r.down_mw - 1e-6, "{r:?}");
            assert!(r.up_mw + r.down_mw >= 2.0 * omega - 1e-6);
        }
    }

    #[test]
    fn solved_point_is_feasible_in_its_own_program() {
        let problem = FlexRequestProblem::new(overloaded_chain(), wind_at(2, 0.01), EpsilonConfig::default());
        let (prog, _) = build_flexreq_program(&problem, 0).unwrap();
        let sol = solve(&prog, &settings()).unwrap();
        assert!(sol.is_optimal());
        let report = prog.evaluate(&sol.values).unwrap();
        assert!(report.primal_eq <= 1e-7 && report.cone <= 1e-7, "{report:?}");
        assert!((report.primal_eq - sol.residuals.primal_eq).abs() <= 1e-9);
    }

    #[test]
    fn impossible_voltage_limit_is_diagnosed() {
        let mut net = overloaded_chain().network().clone();
        net.lines[1].s_rating = 5.0;
        // bus 2 cannot reach 1.45² with no flexibility at the right place
        net.buses[2].v_min = 1.45;
        net.buses[2].v_max = 1.5;
        net.buses[1].v_min = 1.45;
        net.buses[1].v_max = 1.5;
        net.lines[0].r = 0.0;
        net.lines[0].x = 0.0;
        let problem = FlexRequestProblem::new(RadialNetwork::new(net).unwrap(), no_uncertainty(), EpsilonConfig::default());
        match create_flexrequests(&problem, (70.0, 40.0), &settings()) {
            Err(FlexReqError::Infeasible { diagnosis, .. }) => {
                assert_eq!(diagnosis.family, "v_min", "{diagnosis:?}");
                assert!(!diagnosis.relaxed.is_empty());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn price_discovery_cases() {
        assert_eq!(price_discovery(100.0, 100.0, 5.0).unwrap().value, 0.0);
        let p = price_discovery(1000.0, 300.0, 10.0).unwrap();
        assert_eq!(p.value, 70.0);
        assert!(p.warning.is_none());
        let n = price_discovery(300.0, 1000.0, 10.0).unwrap();
        assert_eq!(n.value, -70.0);
        assert!(n.warning.is_some());
        assert!(price_discovery(1.0, 0.0, 0.0).is_err());
        assert!(price_discovery(1.0, 0.0, -2.0).is_err());
    }
}
