use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MarketError, ZonePartition};
use crate::grid::{lindistflow_solve, RadialNetwork};
use crate::uncertainty::{sample_scenarios, ForecastErrorModel};

/// Parameters of the Monte Carlo congestion screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionStudy {
    pub samples: usize,
    /// A line is risky when its loading exceeds the reduced rating in more
    /// than this share of samples.
    pub threshold: f64,
    /// Rating reduction: a sample counts when `P² + Q² > S̄²(1 - margin_frac)`.
    pub margin_frac: f64,
    pub seed: u64,
}

impl Default for CongestionStudy {
    fn default() -> Self {
        Self { samples: 1000, threshold: 0.05, margin_frac: 0.1, seed: 0 }
    }
}

/// Splits the network at lines that are often close to their rating under
/// sampled forecast errors, with no flexibility activated.
///
/// A line is flagged when any period exceeds the threshold. Zones are the
/// connected components that remain after cutting flagged lines.
pub fn zones_from_congestion(
    network: &RadialNetwork,
    model: &ForecastErrorModel,
    study: &CongestionStudy,
) -> Result<(ZonePartition, Vec<usize>), MarketError> {
    let gamma = model.incidence(network)?;
    let scenarios = sample_scenarios(model, study.samples, study.seed)?;
    let n = network.n_buses();
    let zero = vec![0.0; n];
    let mut risky = vec![false; network.n_lines()];
    for t in 0..network.periods().len() {
        let base = network.base_injections(t)?;
        let mut hits = vec![0usize; network.n_lines()];
        for xi in &scenarios.draws {
            let inj: Vec<f64> =
                (0..n).map(|b| base[b] - (0..xi.len()).map(|s| gamma[(b, s)] * xi[s]).sum::<f64>()).collect();
            let flow = lindistflow_solve(network, &inj, &zero)?;
            for (l, line) in network.lines().iter().enumerate() {
                let s2 = flow.p_flow[l].powi(2) + flow.q_flow[l].powi(2);
                if s2 > line.s_rating.powi(2) * (1.0 - study.margin_frac) {
                    hits[l] += 1;
                }
            }
        }
        for l in 0..network.n_lines() {
            if study.samples > 0 && hits[l] as f64 / study.samples as f64 > study.threshold {
                risky[l] = true;
            }
        }
    }

    // components over the remaining lines, walking down from the slack
    let mut zone_of = vec![usize::MAX; n];
    let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for &bus in network.order() {
        let z = match network.feeder_line(bus) {
            Some(l) if !risky[l] => zone_of[network.line_parent(l)],
            _ => bus,
        };
        zone_of[bus] = z;
        groups.entry(z).or_default().push(network.buses()[bus].id);
    }
    let flagged = (0..risky.len()).filter(|&l| risky[l]).collect();
    Ok((ZonePartition::canonical(groups.into_values().collect()), flagged))
}
