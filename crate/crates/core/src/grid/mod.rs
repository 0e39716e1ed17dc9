//! Radial distribution network model and the linearized DistFlow equations.
//!
//! Quantities inside this module are per-unit on the network's `base_mva`.
//! Injections are generation-positive: a load is a negative injection. Line
//! flows are oriented from the slack bus towards the leaves, so the active
//! flow on a line equals the net withdrawal of everything downstream of it.

mod io;

pub use io::{read_network_csv, read_network_json, write_network_json, NetworkDoc};

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("network is not a valid radial feeder:\n{0}")]
    Invalid(ValidationReport),
    #[error("power factor {0} is outside (0, 1]")]
    PowerFactor(f64),
    #[error("expected {expected} per-bus values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
    #[error("unknown period index {0}")]
    UnknownPeriod(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub v_min: f64,
    pub v_max: f64,
    /// Forecast net injection per period (per-unit, generation-positive).
    pub p_inj: Vec<f64>,
    pub cos_phi: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub s_rating: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub id: u32,
    pub dt_hours: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub base_mva: f64,
    pub base_kv: f64,
    /// Squared slack voltage magnitude.
    pub slack_u0: f64,
    pub periods: Vec<Period>,
}

/// One problem found by [`validate_radial`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoSlack,
    MultipleSlack { buses: Vec<u32> },
    DuplicateBus { bus: u32 },
    UnknownBus { line: usize, bus: u32 },
    SelfLoop { line: usize },
    NonPositiveRating { line: usize },
    NegativeImpedance { line: usize },
    VoltageLimits { bus: u32 },
    PowerFactor { bus: u32 },
    InjectionLength { bus: u32 },
    NoPeriods,
    NonPositiveDuration { period: u32 },
    SlackVoltage,
    Cycle { line: usize },
    Disconnected { buses: Vec<u32> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSlack => write!(f, "no slack bus"),
            Violation::MultipleSlack { buses } => write!(f, "multiple slack buses {buses:?}"),
            Violation::DuplicateBus { bus } => write!(f, "duplicate bus id {bus}"),
            Violation::UnknownBus { line, bus } => write!(f, "line {line} references unknown bus {bus}"),
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::NonPositiveRating { line } => write!(f, "line {line} has a non-positive rating"),
            Violation::NegativeImpedance { line } => write!(f, "line {line} has negative r or x"),
            Violation::VoltageLimits { bus } => write!(f, "bus {bus} needs 0 < v_min < v_max"),
            Violation::PowerFactor { bus } => write!(f, "bus {bus} has cos_phi outside (0, 1]"),
            Violation::InjectionLength { bus } => {
                write!(f, "bus {bus} has an injection profile of the wrong length")
            }
            Violation::NoPeriods => write!(f, "no periods"),
            Violation::NonPositiveDuration { period } => {
                write!(f, "period {period} has a non-positive duration")
            }
            Violation::SlackVoltage => write!(f, "slack voltage outside the slack bus limits"),
            Violation::Cycle { line } => write!(f, "line {line} closes a cycle"),
            Violation::Disconnected { buses } => write!(f, "buses {buses:?} are not reachable from the slack"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns false when both already share a root.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Checks that the network is a connected tree rooted at exactly one slack bus,
/// together with the per-element data constraints. Never fails; an empty
/// report means the network is accepted.
pub fn validate_radial(network: &Network) -> ValidationReport {
    let mut violations = Vec::new();
    let mut index = BTreeMap::new();
    for (i, bus) in network.buses.iter().enumerate() {
        if index.insert(bus.id, i).is_some() {
            violations.push(Violation::DuplicateBus { bus: bus.id });
        }
        if !(bus.v_min > 0.0 && bus.v_min < bus.v_max) {
            violations.push(Violation::VoltageLimits { bus: bus.id });
        }
        if !(bus.cos_phi > 0.0 && bus.cos_phi <= 1.0) {
            violations.push(Violation::PowerFactor { bus: bus.id });
        }
        if bus.p_inj.len() != network.periods.len() {
            violations.push(Violation::InjectionLength { bus: bus.id });
        }
    }

    let slacks: Vec<&Bus> = network.buses.iter().filter(|b| b.is_slack).collect();
    match slacks.len() {
        0 => violations.push(Violation::NoSlack),
        1 => {
            let s = slacks[0];
            if s.v_min > 0.0
                && !(network.slack_u0 >= s.v_min * s.v_min && network.slack_u0 <= s.v_max * s.v_max)
            {
                violations.push(Violation::SlackVoltage);
            }
        }
        _ => violations.push(Violation::MultipleSlack { buses: slacks.iter().map(|b| b.id).collect() }),
    }

    if network.periods.is_empty() {
        violations.push(Violation::NoPeriods);
    }
    for p in &network.periods {
        if !(p.dt_hours > 0.0) {
            violations.push(Violation::NonPositiveDuration { period: p.id });
        }
    }

    let mut dsu = DisjointSet::new(network.buses.len());
    for (l, line) in network.lines.iter().enumerate() {
        if !(line.s_rating > 0.0) {
            violations.push(Violation::NonPositiveRating { line: l });
        }
        if line.r < 0.0 || line.x < 0.0 {
            violations.push(Violation::NegativeImpedance { line: l });
        }
        if line.from == line.to {
            violations.push(Violation::SelfLoop { line: l });
            continue;
        }
        let (Some(&a), Some(&b)) = (index.get(&line.from), index.get(&line.to)) else {
            for bus in [line.from, line.to] {
                if !index.contains_key(&bus) {
                    violations.push(Violation::UnknownBus { line: l, bus });
                }
            }
            continue;
        };
        if !dsu.union(a, b) {
            violations.push(Violation::Cycle { line: l });
        }
    }

    // Reachability is judged from the slack when there is exactly one,
    // otherwise from the first bus so that islands are still reported.
    if !network.buses.is_empty() {
        let root_bus = slacks.first().map(|b| b.id).unwrap_or(network.buses[0].id);
        let root = dsu.find(index[&root_bus]);
        let mut stray: Vec<u32> = network
            .buses
            .iter()
            .enumerate()
            .filter(|&(i, _)| dsu.find(i) != root)
            .map(|(_, b)| b.id)
            .collect();
        if !stray.is_empty() {
            stray.sort_unstable();
            stray.dedup();
            violations.push(Violation::Disconnected { buses: stray });
        }
    }

    ValidationReport { violations }
}

/// `K = sqrt((1 - cos²φ) / cos²φ)`, the reactive-to-active injection ratio.
pub fn reactive_coupling(cos_phi: f64) -> Result<f64, GridError> {
    if !(cos_phi > 0.0 && cos_phi <= 1.0) {
        return Err(GridError::PowerFactor(cos_phi));
    }
    let c2 = cos_phi * cos_phi;
    Ok(((1.0 - c2) / c2).max(0.0).sqrt())
}

/// A validated radial network with lines oriented away from the slack bus.
///
/// Buses keep the order of the input document; line `l` keeps its input
/// position and satisfies `lines[l].to == buses[child(l)].id`.
#[derive(Debug, Clone)]
pub struct RadialNetwork {
    network: Network,
    index: BTreeMap<u32, usize>,
    slack: usize,
    /// Bus index at the near (slack-side) end of each line.
    line_parent: Vec<usize>,
    /// Bus index at the far end of each line.
    line_child: Vec<usize>,
    /// Line feeding each bus; `None` for the slack.
    feeder_line: Vec<Option<usize>>,
    /// Buses in breadth-first order from the slack.
    order: Vec<usize>,
    depth: Vec<usize>,
    k: Vec<f64>,
}

impl TryFrom<Network> for RadialNetwork {
    type Error = GridError;

    fn try_from(network: Network) -> Result<Self, GridError> {
        RadialNetwork::new(network)
    }
}

impl RadialNetwork {
    pub fn new(mut network: Network) -> Result<Self, GridError> {
        let report = validate_radial(&network);
        if !report.is_valid() {
            return Err(GridError::Invalid(report));
        }
        let n = network.buses.len();
        let index: BTreeMap<u32, usize> =
            network.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let slack = network.buses.iter().position(|b| b.is_slack).expect("validated");

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (l, line) in network.lines.iter().enumerate() {
            let (a, b) = (index[&line.from], index[&line.to]);
            adjacency[a].push((b, l));
            adjacency[b].push((a, l));
        }

        let mut feeder_line = vec![None; n];
        let mut depth = vec![0; n];
        let mut seen = vec![false; n];
        let mut line_parent = vec![0; network.lines.len()];
        let mut line_child = vec![0; network.lines.len()];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(bus) = queue.pop_front() {
            order.push(bus);
            for &(next, l) in &adjacency[bus] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                feeder_line[next] = Some(l);
                depth[next] = depth[bus] + 1;
                line_parent[l] = bus;
                line_child[l] = next;
                queue.push_back(next);
            }
        }

        for (l, line) in network.lines.iter_mut().enumerate() {
            if index[&line.to] != line_child[l] {
                std::mem::swap(&mut line.from, &mut line.to);
            }
        }

        let k = network
            .buses
            .iter()
            .map(|b| reactive_coupling(b.cos_phi))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Self { network, index, slack, line_parent, line_child, feeder_line, order, depth, k })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn buses(&self) -> &[Bus] {
        &self.network.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.network.lines
    }

    pub fn periods(&self) -> &[Period] {
        &self.network.periods
    }

    pub fn n_buses(&self) -> usize {
        self.network.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.network.lines.len()
    }

    pub fn base_mva(&self) -> f64 {
        self.network.base_mva
    }

    pub fn slack_u0(&self) -> f64 {
        self.network.slack_u0
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn line_parent(&self, line: usize) -> usize {
        self.line_parent[line]
    }

    pub fn line_child(&self, line: usize) -> usize {
        self.line_child[line]
    }

    pub fn feeder_line(&self, bus: usize) -> Option<usize> {
        self.feeder_line[bus]
    }

    pub fn depth(&self, bus: usize) -> usize {
        self.depth[bus]
    }

    /// Buses in breadth-first order from the slack (parents before children).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Per-bus reactive coupling factors.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Line indices on the path from the slack to `bus`, slack side first.
    pub fn path_lines(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[bus]);
        let mut cur = bus;
        while let Some(l) = self.feeder_line[cur] {
            path.push(l);
            cur = self.line_parent[l];
        }
        path.reverse();
        path
    }

    /// Forecast injections of all buses in one period.
    pub fn base_injections(&self, period: usize) -> Result<Vec<f64>, GridError> {
        if period >= self.network.periods.len() {
            return Err(GridError::UnknownPeriod(period));
        }
        Ok(self.network.buses.iter().map(|b| b.p_inj[period]).collect())
    }

    /// Non-slack bus indices in input order.
    pub fn non_slack(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_buses()).filter(move |&i| i != self.slack)
    }
}

/// Line-by-bus incidence of slack-to-bus paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMatrix {
    n_lines: usize,
    n_buses: usize,
    entries: Vec<bool>,
}

impl PathMatrix {
    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    /// True iff `line` lies on the unique slack-to-`bus` path.
    pub fn get(&self, line: usize, bus: usize) -> bool {
        self.entries[line * self.n_buses + bus]
    }

    /// Buses whose path uses `line`, i.e. everything downstream of it.
    pub fn downstream(&self, line: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_buses).filter(move |&n| self.get(line, n))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_lines)
            .map(|l| (0..self.n_buses).map(|n| self.get(l, n) as u8).collect())
            .collect()
    }
}

pub fn build_path_matrix(network: &RadialNetwork) -> PathMatrix {
    let (n_lines, n_buses) = (network.n_lines(), network.n_buses());
    let mut entries = vec![false; n_lines * n_buses];
    for bus in 0..n_buses {
        for l in network.path_lines(bus) {
            entries[l * n_buses + bus] = true;
        }
    }
    PathMatrix { n_lines, n_buses, entries }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowState {
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Squared voltage magnitudes.
    pub u: Vec<f64>,
}

/// Solves the lossless LinDistFlow equations for one operating point.
///
/// `injections` and `flex` are per-bus active injections; reactive injections
/// follow as `K_n · (injection + flex)`. The slack bus absorbs the balance.
pub fn lindistflow_solve(
    network: &RadialNetwork,
    injections: &[f64],
    flex: &[f64],
) -> Result<FlowState, GridError> {
    let n = network.n_buses();
    for v in [injections, flex] {
        if v.len() != n {
            return Err(GridError::Dimension { expected: n, got: v.len() });
        }
    }
    // Downstream withdrawal accumulated leaves-first.
    let mut sub_p: Vec<f64> = injections.iter().zip(flex).map(|(p, f)| -(p + f)).collect();
    let mut sub_q: Vec<f64> = sub_p.iter().zip(network.k()).map(|(p, k)| p * k).collect();
    let mut p_flow = vec![0.0; network.n_lines()];
    let mut q_flow = vec![0.0; network.n_lines()];
    for &bus in network.order().iter().rev() {
        if let Some(l) = network.feeder_line(bus) {
            p_flow[l] = sub_p[bus];
            q_flow[l] = sub_q[bus];
            let parent = network.line_parent(l);
            sub_p[parent] += sub_p[bus];
            sub_q[parent] += sub_q[bus];
        }
    }

    let mut u = vec![0.0; n];
    u[network.slack()] = network.slack_u0();
    for &bus in network.order() {
        if let Some(l) = network.feeder_line(bus) {
            let line = &network.lines()[l];
            u[bus] = u[network.line_parent(l)] - 2.0 * (line.r * p_flow[l] + line.x * q_flow[l]);
        }
    }
    Ok(FlowState { p_flow, q_flow, u })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn bus(id: u32, p: f64, slack: bool) -> Bus {
        Bus { id, v_min: 0.9, v_max: 1.1, p_inj: vec![p], cos_phi: 1.0, is_slack: slack }
    }

    pub fn line(from: u32, to: u32) -> Line {
        Line { from, to, r: 0.01, x: 0.02, s_rating: 1.0 }
    }

    pub fn network(buses: Vec<Bus>, lines: Vec<Line>) -> Network {
        Network {
            buses,
            lines,
            base_mva: 1.0,
            base_kv: 11.0,
            slack_u0: 1.0,
            periods: vec![Period { id: 0, dt_hours: 1.0 }],
        }
    }

    pub fn chain(n: u32) -> Network {
        network(
            (0..n).map(|i| bus(i, 0.0, i == 0)).collect(),
            (1..n).map(|i| line(i - 1, i)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_is_valid() {
        assert!(validate_radial(&chain(3)).is_valid());
    }

    #[test]
    fn triangle_reports_cycle() {
        let net = network(
            vec![bus(0, 0.0, true), bus(1, 0.0, false), bus(2, 0.0, false)],
            vec![line(0, 1), line(1, 2), line(2, 0)],
        );
        let report = validate_radial(&net);
        assert!(report.violations.contains(&Violation::Cycle { line: 2 }));
    }

    #[test]
    fn two_components_report_disconnected_buses() {
        let net = network(
            (0..4).map(|i| bus(i, 0.0, i == 0)).collect(),
            vec![line(0, 1), line(2, 3)],
        );
        let report = validate_radial(&net);
        assert_eq!(report.violations, vec![Violation::Disconnected { buses: vec![2, 3] }]);
    }

    #[test]
    fn slack_count_and_ratings_are_checked() {
        let mut net = chain(3);
        net.buses[0].is_slack = false;
        net.lines[1].s_rating = 0.0;
        let report = validate_radial(&net);
        assert!(report.violations.contains(&Violation::NoSlack));
        assert!(report.violations.contains(&Violation::NonPositiveRating { line: 1 }));

        let mut net = chain(3);
        net.buses[2].is_slack = true;
        let report = validate_radial(&net);
        assert!(matches!(report.violations[0], Violation::MultipleSlack { .. }));
    }

    #[test]
    fn invalid_network_is_rejected() {
        let mut net = chain(3);
        net.lines.push(line(2, 0));
        assert!(matches!(RadialNetwork::new(net), Err(GridError::Invalid(_))));
    }

    #[test]
    fn lines_are_reoriented_from_the_slack() {
        let mut net = chain(3);
        net.lines[1] = line(2, 1);
        let radial = RadialNetwork::new(net).unwrap();
        assert_eq!((radial.lines()[1].from, radial.lines()[1].to), (1, 2));
        assert_eq!(radial.line_child(1), 2);
    }

    #[test]
    fn chain_path_matrix() {
        let radial = RadialNetwork::new(chain(3)).unwrap();
        let a = build_path_matrix(&radial);
        assert!(a.get(0, 1) && a.get(0, 2) && !a.get(1, 1) && a.get(1, 2));
        assert!(!a.get(0, 0) && !a.get(1, 0));
    }

    #[test]
    fn star_path_matrix_is_identity_on_leaves() {
        let net = network(
            (0..4).map(|i| bus(i, 0.0, i == 0)).collect(),
            (1..4).map(|i| line(0, i)).collect(),
        );
        let radial = RadialNetwork::new(net).unwrap();
        let a = build_path_matrix(&radial);
        for k in 0..3 {
            for m in 1..4 {
                assert_eq!(a.get(k, m), k + 1 == m);
            }
        }
    }

    #[test]
    fn reactive_coupling_values() {
        assert_eq!(reactive_coupling(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(reactive_coupling(0.95).unwrap(), (0.0975f64 / 0.9025).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(reactive_coupling(0.95).unwrap(), 0.32868, epsilon = 1e-5);
        assert_abs_diff_eq!(reactive_coupling(1.0 / 2f64.sqrt()).unwrap(), 1.0, epsilon = 1e-12);
        assert!(reactive_coupling(0.0).is_err());
        assert!(reactive_coupling(1.2).is_err());
    }

    #[test]
    fn zero_injection_gives_flat_profile() {
        let radial = RadialNetwork::new(chain(4)).unwrap();
        let s = lindistflow_solve(&radial, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(s.p_flow.iter().chain(&s.q_flow).all(|&v| v == 0.0));
        assert!(s.u.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn two_bus_hand_evaluation() {
        let mut net = network(vec![bus(0, 0.0, true), bus(1, -1.0, false)], vec![line(0, 1)]);
        net.lines[0].r = 0.01;
        let radial = RadialNetwork::new(net).unwrap();
        let s = lindistflow_solve(&radial, &radial.base_injections(0).unwrap(), &[0.0; 2]).unwrap();
        assert_abs_diff_eq!(s.p_flow[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.u[1], 0.98, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let radial = RadialNetwork::new(chain(3)).unwrap();
        assert!(lindistflow_solve(&radial, &[0.0; 2], &[0.0; 3]).is_err());
    }
}
