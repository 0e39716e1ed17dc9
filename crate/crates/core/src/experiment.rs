//! End-to-end experiment: configuration, the request → clearing → evaluation
//! pipeline, and the artifacts it writes into a run directory named after
//! the configuration hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cases::{bundled_model, bundled_network, generate_offers, Liquidity, OfferParams};
use crate::evaluate::{
    dispatch_scenarios, gap_bounds, out_of_sample, welfare, EvaluateError, GapInstance, GapOffer, GapReport,
    NodalRequest, PolicySolution, ProcuredFlexibility, Procurement, Provenance, ViolationReport, WelfareReport,
};
use crate::flexreq::{create_flexrequests, BalanceMode, FlexReqError, FlexRequestProblem, FlexRequestSet};
use crate::grid::{read_network_json, GridError, RadialNetwork};
use crate::market::{
    clear_deterministic, clear_stochastic, procured_capacity, read_bids_csv, read_zones_json, request_bids,
    write_bids_csv, write_json, zones_from_congestion, Bid, BidKind, CongestionStudy, DeterministicResult, Direction,
    MarketError, StochasticPrices, StochasticProblem, StochasticResult, ZonePartition, ACTIVATION_COST_MODEL,
};
use crate::socp::SolverSettings;
use crate::uncertainty::{
    estimate_covariance, read_model_json, sample_scenarios, EpsilonConfig, ForecastErrorModel, ScenarioSet,
    UncertaintyError,
};

/// Reported with every run so the margin convention can be audited.
pub const RATING_SPLIT_NOTICE: &str = "line-rating margins give the active-power part beta * eps_S and the \
reactive-power part (1 - beta) * eps_S";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Request(#[from] FlexReqError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
}

fn request_is_input(e: &FlexReqError) -> bool {
    !matches!(e, FlexReqError::Infeasible { .. } | FlexReqError::Solver { .. } | FlexReqError::Socp(_))
}

impl ExperimentError {
    /// Bad input as opposed to an infeasible or failed solve.
    pub fn is_input_error(&self) -> bool {
        match self {
            ExperimentError::Request(e) => request_is_input(e),
            ExperimentError::Market(MarketError::Request(e)) => request_is_input(e),
            ExperimentError::Market(MarketError::Socp(_)) => false,
            ExperimentError::Evaluate(EvaluateError::Request(e)) => request_is_input(e),
            ExperimentError::Evaluate(EvaluateError::Socp(_) | EvaluateError::Dispatch { .. }) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Scenarios the covariance is estimated from.
    pub covariance: u64,
    /// Fresh scenarios for violation statistics and dispatch.
    pub out_of_sample: u64,
    pub offers: u64,
    /// Monte Carlo draws of the congestion screen.
    pub zones: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { covariance: 2024, out_of_sample: 2025, offers: 7, zones: 11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioCounts {
    pub covariance: usize,
    pub out_of_sample: usize,
}

impl Default for ScenarioCounts {
    fn default() -> Self {
        Self { covariance: 1000, out_of_sample: 2000 }
    }
}

/// €/MW for capacity, €/MWh for real-time energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prices {
    pub request_up: f64,
    pub request_down: f64,
    pub activation: f64,
    pub shedding: f64,
    pub curtailment: f64,
    pub offer_min: f64,
    pub offer_max: f64,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            request_up: 70.0,
            request_down: 40.0,
            activation: 0.0,
            shedding: 200.0,
            curtailment: 60.0,
            offer_min: 25.0,
            offer_max: 35.0,
        }
    }
}

impl Prices {
    pub fn realtime(&self) -> StochasticPrices {
        StochasticPrices { activation: self.activation, shedding: self.shedding, curtailment: self.curtailment }
    }

    pub fn request(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Up => self.request_up,
            Direction::Down => self.request_down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Deterministic,
    Stochastic,
    NoMarket,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Deterministic => "deterministic",
            Mechanism::Stochastic => "stochastic",
            Mechanism::NoMarket => "no_market",
        }
    }
}

/// How zones are formed when no zone file is given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zoning {
    #[default]
    Nodal,
    Single,
    Congestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network JSON; the bundled 15-bus feeder when absent.
    pub network: Option<PathBuf>,
    /// Model JSON holding the true error covariance; its ε and β are
    /// ignored in favour of `epsilons`.
    pub model: Option<PathBuf>,
    /// Offer book CSV; generated from `liquidity` and the offer seed when absent.
    pub bids: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub zoning: Zoning,
    pub seeds: Seeds,
    pub counts: ScenarioCounts,
    pub epsilons: EpsilonConfig,
    pub prices: Prices,
    pub offer_quantity_mw: f64,
    pub liquidity: Liquidity,
    /// Also evaluate every other liquidity level with generated offers.
    pub sweep_liquidity: bool,
    pub mechanisms: Vec<Mechanism>,
    pub balance_mode: BalanceMode,
    /// Deliverable share per bus for the gap bounds; unlisted buses use 1.
    pub shares: BTreeMap<u32, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: None,
            model: None,
            bids: None,
            zones: None,
            zoning: Zoning::default(),
            seeds: Seeds::default(),
            counts: ScenarioCounts::default(),
            epsilons: EpsilonConfig::default(),
            prices: Prices::default(),
            offer_quantity_mw: 0.5,
            liquidity: Liquidity::High,
            sweep_liquidity: false,
            mechanisms: vec![Mechanism::Deterministic, Mechanism::Stochastic, Mechanism::NoMarket],
            balance_mode: BalanceMode::default(),
            shares: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = read_file(path)?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.counts.covariance < 2 {
            return Err(ExperimentError::Config("covariance scenario count must be at least 2".into()));
        }
        if self.counts.out_of_sample < 1 {
            return Err(ExperimentError::Config("out-of-sample scenario count must be at least 1".into()));
        }
        if !(self.offer_quantity_mw > 0.0) {
            return Err(ExperimentError::Config("offer quantity must be positive".into()));
        }
        if !(self.prices.offer_min <= self.prices.offer_max) {
            return Err(ExperimentError::Config("offer price range is empty".into()));
        }
        self.epsilons.validate()?;
        for path in [&self.network, &self.model, &self.bids, &self.zones].into_iter().flatten() {
            if !path.exists() {
                return Err(ExperimentError::Missing(path.clone()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn run_dir(&self, root: &Path) -> PathBuf {
        root.join(format!("run-{}", &self.hash()[..12]))
    }

    pub fn offer_params(&self) -> OfferParams {
        OfferParams {
            price_min: self.prices.offer_min,
            price_max: self.prices.offer_max,
            quantity_mw: self.offer_quantity_mw,
        }
    }

    fn liquidity_levels(&self) -> Vec<Liquidity> {
        if self.sweep_liquidity && self.bids.is_none() {
            vec![Liquidity::High, Liquidity::Medium, Liquidity::Low, Liquidity::None]
        } else {
            vec![self.liquidity]
        }
    }
}

/// Pretty JSON artifact with a trailing newline.
pub fn write_artifact<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), ExperimentError> {
    Ok(write_json(value, path)?)
}

fn read_file(path: &Path) -> Result<String, ExperimentError> {
    if !path.exists() {
        return Err(ExperimentError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })
}

/// Network, error models and zones shared by every stage.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub network: RadialNetwork,
    /// Distribution the out-of-sample scenarios are drawn from.
    pub truth: ForecastErrorModel,
    /// Same sources with the covariance estimated from seeded samples; this
    /// is what the optimization sees.
    pub estimated: ForecastErrorModel,
    pub zones: ZonePartition,
    /// Lines flagged by the congestion screen (empty unless it ran).
    pub risky_lines: Vec<usize>,
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<Inputs, ExperimentError> {
    config.validate()?;
    let network = match &config.network {
        Some(path) => read_network_json(path)?,
        None => bundled_network(),
    };
    let network = RadialNetwork::new(network)?;
    let truth = match &config.model {
        Some(path) => read_model_json(path)?.0,
        None => bundled_model(),
    };
    truth.incidence(&network)?;
    let sample = sample_scenarios(&truth, config.counts.covariance, config.seeds.covariance)?;
    let estimated = truth.with_sigma(estimate_covariance(&sample)?)?;

    let mut risky_lines = Vec::new();
    let zones = match (&config.zones, config.zoning) {
        (Some(path), _) => read_zones_json(path)?,
        (None, Zoning::Nodal) => ZonePartition::nodal(&network),
        (None, Zoning::Single) => ZonePartition::single(&network),
        (None, Zoning::Congestion) => {
            let study = CongestionStudy { seed: config.seeds.zones, ..CongestionStudy::default() };
            let (zones, risky) = zones_from_congestion(&network, &estimated, &study)?;
            risky_lines = risky;
            zones
        }
    };
    let ids: Vec<u32> = network.buses().iter().map(|b| b.id).collect();
    zones.validate(&ids)?;
    Ok(Inputs { network, truth, estimated, zones, risky_lines })
}

pub fn offers_for(config: &ExperimentConfig, inputs: &Inputs, liquidity: Liquidity) -> Result<Vec<Bid>, ExperimentError> {
    match &config.bids {
        Some(path) => {
            let bids = read_bids_csv(path)?;
            Ok(bids.into_iter().filter(|b| b.kind == BidKind::Offer).collect())
        }
        None => Ok(generate_offers(inputs.network.network(), liquidity, &config.offer_params(), config.seeds.offers)),
    }
}

pub fn create_requests(config: &ExperimentConfig, inputs: &Inputs) -> Result<FlexRequestSet, ExperimentError> {
    let mut problem = FlexRequestProblem::new(inputs.network.clone(), inputs.estimated.clone(), config.epsilons);
    problem.mode = config.balance_mode;
    let prices = (config.prices.request_up, config.prices.request_down);
    Ok(create_flexrequests(&problem, prices, &SolverSettings::default())?)
}

/// Request bids with ids placed after every offer id.
pub fn requests_as_bids(set: &FlexRequestSet, offers: &[Bid]) -> Vec<Bid> {
    let first = offers.iter().map(|b| b.id).max().unwrap_or(0) + 1;
    request_bids(&set.entries(), first)
}

pub fn clear_det(
    set: &FlexRequestSet,
    offers: &[Bid],
    zones: &ZonePartition,
) -> Result<(Vec<Bid>, DeterministicResult), ExperimentError> {
    let requests = requests_as_bids(set, offers);
    let result = clear_deterministic(offers, &requests, zones)?;
    Ok((requests, result))
}

pub fn clear_stoch(
    config: &ExperimentConfig,
    inputs: &Inputs,
    offers: &[Bid],
) -> Result<StochasticResult, ExperimentError> {
    let problem = StochasticProblem {
        network: inputs.network.clone(),
        model: inputs.estimated.clone(),
        epsilons: config.epsilons,
        mode: config.balance_mode,
        offers: offers.to_vec(),
        prices: config.prices.realtime(),
    };
    Ok(clear_stochastic(&problem, &SolverSettings::default())?)
}

/// Market-stage money flows of the stochastic clearing: accepted offers are
/// paid for at the request price of their direction.
pub fn stochastic_procurement(result: &StochasticResult, offers: &[Bid], prices: &Prices) -> Procurement {
    let mut p = Procurement::default();
    for o in offers {
        let q = result.accepted_mw(o.id);
        p.request_payment += q * prices.request(o.direction);
        p.offer_cost += q * o.price_eur_per_mw;
    }
    p
}

/// Gap bounds of the created request volume against the offer book, per
/// period and direction.
pub fn gap_instances(config: &ExperimentConfig, set: &FlexRequestSet, offers: &[Bid]) -> Vec<(u32, Direction, GapInstance)> {
    let periods: Vec<u32> = set.periods.iter().map(|p| p.period).collect();
    let mut out = Vec::new();
    for &period in &periods {
        for direction in [Direction::Up, Direction::Down] {
            let requests: Vec<NodalRequest> = set
                .requests
                .iter()
                .filter(|r| r.period == period)
                .map(|r| NodalRequest {
                    bus: r.bus,
                    mw: match direction {
                        Direction::Up => r.up_mw,
                        Direction::Down => r.down_mw,
                    },
                })
                .filter(|r| r.mw > 0.0)
                .collect();
            if requests.is_empty() {
                continue;
            }
            let offers = offers
                .iter()
                .filter(|o| o.period == period && o.direction == direction)
                .map(|o| GapOffer { bus: o.bus, mw: o.quantity_mw, price: o.price_eur_per_mw })
                .collect();
            let instance =
                GapInstance { requests, offers, shares: config.shares.clone(), lambda_r: config.prices.request(direction) };
            out.push((period, direction, instance));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub mechanism: Mechanism,
    pub liquidity: Liquidity,
    pub procured_up_mw: f64,
    pub procured_down_mw: f64,
    pub welfare: WelfareReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub period: u32,
    pub direction: Direction,
    pub report: GapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub request_volume_mw: f64,
    pub violations_requests: ViolationReport,
    /// Violations of the stochastic clearing at the configured liquidity.
    pub violations_stochastic: Option<ViolationReport>,
    pub outcomes: Vec<MechanismOutcome>,
    pub gap: Vec<GapEntry>,
    pub notices: Vec<String>,
}

impl ExperimentReport {
    pub fn outcome(&self, mechanism: Mechanism, liquidity: Liquidity) -> Option<&MechanismOutcome> {
        self.outcomes.iter().find(|o| o.mechanism == mechanism && o.liquidity == liquidity)
    }
}

pub fn notices() -> Vec<String> {
    vec![RATING_SPLIT_NOTICE.to_owned(), format!("expected activation cost: {ACTIVATION_COST_MODEL}")]
}

fn procured_totals(p: &ProcuredFlexibility) -> (f64, f64) {
    p.capacity.values().fold((0.0, 0.0), |(u, d), &(cu, cd)| (u + cu, d + cd))
}

fn liquidity_name(l: Liquidity) -> &'static str {
    match l {
        Liquidity::High => "high",
        Liquidity::Medium => "medium",
        Liquidity::Low => "low",
        Liquidity::None => "none",
    }
}

/// Runs the whole pipeline and writes every artifact below
/// `config.run_dir(root)`. Identical configurations give byte-identical
/// files.
pub fn run_experiment(config: &ExperimentConfig, root: &Path) -> Result<(PathBuf, ExperimentReport), ExperimentError> {
    let inputs = load_inputs(config)?;
    let dir = config.run_dir(root);
    fs::create_dir_all(&dir).map_err(|source| ExperimentError::Io { path: dir.display().to_string(), source })?;
    write_json(config, &dir.join("config.json"))?;
    write_json(&inputs.zones, &dir.join("zones.json"))?;

    let set = create_requests(config, &inputs)?;
    write_json(&set, &dir.join("requests.json"))?;
    write_json(&set.entries(), &dir.join("request_book.json"))?;

    let scenarios: ScenarioSet =
        sample_scenarios(&inputs.truth, config.counts.out_of_sample, config.seeds.out_of_sample)?;
    let violations_requests = out_of_sample(PolicySolution::Requests(&set), &inputs.network, &inputs.truth, &scenarios)?;
    let dispatch = |procured: &ProcuredFlexibility| {
        dispatch_scenarios(
            &inputs.network,
            &inputs.truth,
            procured,
            &scenarios,
            &config.prices.realtime(),
            config.balance_mode,
            &SolverSettings::default(),
        )
    };

    let mut outcomes = Vec::new();
    let mut violations_stochastic = None;
    let mut gap = Vec::new();
    if config.mechanisms.contains(&Mechanism::NoMarket) {
        let none = ProcuredFlexibility::none();
        let report = welfare(&Procurement::default(), &dispatch(&none)?, scenarios.count())?;
        outcomes.push(MechanismOutcome {
            mechanism: Mechanism::NoMarket,
            liquidity: Liquidity::None,
            procured_up_mw: 0.0,
            procured_down_mw: 0.0,
            welfare: report,
        });
    }
    for liquidity in config.liquidity_levels() {
        let name = liquidity_name(liquidity);
        let offers = offers_for(config, &inputs, liquidity)?;
        write_bids_csv(&offers, &dir.join(format!("offers_{name}.csv")))?;
        if liquidity == config.liquidity {
            gap = gap_instances(config, &set, &offers)
                .into_iter()
                .map(|(period, direction, inst)| Ok(GapEntry { period, direction, report: gap_bounds(&inst)? }))
                .collect::<Result<_, EvaluateError>>()?;
        }
        for &mechanism in &config.mechanisms {
            let (procurement, procured) = match mechanism {
                Mechanism::NoMarket => continue,
                Mechanism::Deterministic => {
                    let (_, result) = clear_det(&set, &offers, &inputs.zones)?;
                    write_json(&result, &dir.join(format!("clearing_det_{name}.json")))?;
                    let capacity = procured_capacity(&offers, &result.accepted);
                    (
                        Procurement { request_payment: result.request_payment, offer_cost: result.offer_cost },
                        ProcuredFlexibility { provenance: Provenance::Deterministic, capacity },
                    )
                }
                Mechanism::Stochastic => {
                    let result = clear_stoch(config, &inputs, &offers)?;
                    write_json(&result, &dir.join(format!("clearing_stoch_{name}.json")))?;
                    if liquidity == config.liquidity {
                        violations_stochastic = Some(out_of_sample(
                            PolicySolution::Stochastic(&result),
                            &inputs.network,
                            &inputs.truth,
                            &scenarios,
                        )?);
                    }
                    let capacity = procured_capacity(&offers, &result.accepted);
                    (
                        stochastic_procurement(&result, &offers, &config.prices),
                        ProcuredFlexibility { provenance: Provenance::Stochastic, capacity },
                    )
                }
            };
            let (up, down) = procured_totals(&procured);
            let report = welfare(&procurement, &dispatch(&procured)?, scenarios.count())?;
            outcomes.push(MechanismOutcome {
                mechanism,
                liquidity,
                procured_up_mw: up,
                procured_down_mw: down,
                welfare: report,
            });
        }
    }

    let report = ExperimentReport {
        config_hash: config.hash(),
        request_volume_mw: set.total_volume_mw(),
        violations_requests,
        violations_stochastic,
        outcomes,
        gap,
        notices: notices(),
    };
    write_artifacts(&dir, &report)?;
    Ok((dir, report))
}

fn write_artifacts(dir: &Path, report: &ExperimentReport) -> Result<(), ExperimentError> {
    write_json(&report.violations_requests, &dir.join("violations_requests.json"))?;
    if let Some(v) = &report.violations_stochastic {
        write_json(v, &dir.join("violations_stochastic.json"))?;
    }
    write_json(&report.gap, &dir.join("gap.json"))?;
    write_json(report, &dir.join("report.json"))?;

    let mut welfare_csv = String::from("mechanism,liquidity,procurement_welfare,shedding,curtailment,social_welfare\n");
    let mut cost_csv =
        String::from("mechanism,liquidity,request_payment,activation,shedding,curtailment,dso_cost\n");
    for o in &report.outcomes {
        let w = &o.welfare;
        let (m, l) = (o.mechanism.name(), liquidity_name(o.liquidity));
        let _ = writeln!(
            welfare_csv,
            "{m},{l},{},{},{},{}",
            w.procurement_welfare, w.realtime.shedding, w.realtime.curtailment, w.social_welfare
        );
        let _ = writeln!(
            cost_csv,
            "{m},{l},{},{},{},{},{}",
            w.request_payment, w.realtime.activation, w.realtime.shedding, w.realtime.curtailment, w.dso_cost
        );
    }
    write_text(&dir.join("welfare.csv"), &welfare_csv)?;
    write_text(&dir.join("dso_cost.csv"), &cost_csv)?;

    let mut violations_csv = String::from("solution,family,max_frequency,worst\n");
    let solutions = [("requests", Some(&report.violations_requests)), ("stochastic", report.violations_stochastic.as_ref())];
    for (name, v) in solutions {
        for f in v.map(|v| v.families.as_slice()).unwrap_or_default() {
            let _ = writeln!(violations_csv, "{name},{},{},{}", f.family, f.max_frequency, f.worst.as_deref().unwrap_or(""));
        }
    }
    write_text(&dir.join("violations.csv"), &violations_csv)?;
    write_text(&dir.join("summary.txt"), &summary(report))
}

/// Human-readable digest of a run.
pub fn summary(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config {}", &report.config_hash[..12]);
    let _ = writeln!(s, "requested flexibility: {:.4} MW", report.request_volume_mw);
    let mut line = |name: &str, v: &ViolationReport| {
        let _ = writeln!(
            s,
            "max violation ({name}): {:.4} over {} scenarios{}",
            v.max_frequency,
            v.samples,
            v.worst.as_ref().map(|w| format!(", worst {w}")).unwrap_or_default()
        );
    };
    line("requests", &report.violations_requests);
    if let Some(v) = &report.violations_stochastic {
        line("stochastic", v);
    }
    for o in &report.outcomes {
        let _ = writeln!(
            s,
            "{:<13} {:<6} social welfare {:>10.3} EUR, DSO cost {:>10.3} EUR",
            o.mechanism.name(),
            liquidity_name(o.liquidity),
            o.welfare.social_welfare,
            o.welfare.dso_cost
        );
    }
    for g in &report.gap {
        let _ = writeln!(
            s,
            "gap period {} {:?}: level {} ({})",
            g.period,
            g.direction,
            g.report.level.number(),
            g.report.description
        );
    }
    for n in &report.notices {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
