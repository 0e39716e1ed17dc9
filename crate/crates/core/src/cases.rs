//! Bundled and generated datasets: a synthetic 15-bus feeder with two wind
//! farms, random radial networks, and seeded offer books.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Bus, Line, Network, Period};
use crate::market::{Bid, BidKind, Direction};
use crate::uncertainty::{ForecastErrorModel, Source};

/// Synthetic 15-bus radial feeder (not a published benchmark).
///
/// Main feeder 0-1-2-3-4-5-6, laterals 2-7-8-9-10 and 4-11-12-13-14, wind
/// farms at the ends of the laterals. Values in MW at a 1 MVA base.
pub fn bundled_network() -> Network {
    let loads = [
        (1, 0.20),
        (2, 0.15),
        (3, 0.25),
        (4, 0.20),
        (5, 0.30),
        (6, 0.25),
        (7, 0.10),
        (8, 0.15),
        (9, 0.20),
        (11, 0.10),
        (12, 0.15),
        (13, 0.20),
    ];
    let mut buses: Vec<Bus> = (0..15)
        .map(|id| Bus { id, v_min: 0.9, v_max: 1.1, p_inj: vec![0.0], cos_phi: 0.95, is_slack: id == 0 })
        .collect();
    for (id, mw) in loads {
        buses[id as usize].p_inj = vec![-mw];
    }
    buses[10].p_inj = vec![1.6];
    buses[14].p_inj = vec![1.2];

    let topology: [(u32, u32, f64); 14] = [
        (0, 1, 4.0),
        (1, 2, 4.0),
        (2, 3, 3.0),
        (3, 4, 3.0),
        (4, 5, 2.0),
        (5, 6, 1.0),
        (2, 7, 1.1),
        (7, 8, 1.2),
        (8, 9, 1.4),
        (9, 10, 1.6),
        (4, 11, 1.0),
        (11, 12, 1.2),
        (12, 13, 1.3),
        (13, 14, 1.5),
    ];
    let lines = topology
        .iter()
        .map(|&(from, to, s_rating)| Line { from, to, r: 0.01, x: 0.015, s_rating })
        .collect();
    Network { buses, lines, base_mva: 1.0, base_kv: 11.0, slack_u0: 1.0, periods: vec![Period { id: 0, dt_hours: 1.0 }] }
}

/// True forecast-error model of the bundled feeder: σ = 0.12 and 0.15 MW,
/// correlation 0.7.
pub fn bundled_model() -> ForecastErrorModel {
    let (s1, s2, rho) = (0.12, 0.15, 0.7);
    ForecastErrorModel::new(
        vec![Source { id: "wind_10".into(), bus: 10 }, Source { id: "wind_14".into(), bus: 14 }],
        DMatrix::from_row_slice(2, 2, &[s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2]),
    )
    .expect("valid covariance")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomNetworkParams {
    pub buses: usize,
    pub periods: usize,
    pub base_mva: f64,
}

impl Default for RandomNetworkParams {
    fn default() -> Self {
        Self { buses: 15, periods: 1, base_mva: 1.0 }
    }
}

/// Random radial feeder: bus 0 is the slack, every other bus hangs off one
/// of the three previous buses. Loads of 0.05-0.3 MW, occasional generation.
pub fn random_network(params: &RandomNetworkParams, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.buses.max(2);
    let base = params.base_mva;
    let mut buses = Vec::with_capacity(n);
    for id in 0..n as u32 {
        let p_inj = (0..params.periods)
            .map(|_| {
                if id == 0 {
                    0.0
                } else if rng.gen_bool(0.2) {
                    rng.gen_range(0.1..0.5) / base
                } else {
                    -rng.gen_range(0.05..0.3) / base
                }
            })
            .collect();
        buses.push(Bus { id, v_min: 0.9, v_max: 1.1, p_inj, cos_phi: 0.95, is_slack: id == 0 });
    }
    let mut lines = Vec::with_capacity(n - 1);
    for to in 1..n as u32 {
        let from = rng.gen_range(to.saturating_sub(3)..to);
        lines.push(Line {
            from,
            to,
            r: rng.gen_range(0.002..0.02),
            x: rng.gen_range(0.002..0.03),
            s_rating: rng.gen_range(1.0..3.0),
        });
    }
    let periods = (0..params.periods as u32).map(|id| Period { id, dt_hours: 1.0 }).collect();
    Network { buses, lines, base_mva: base, base_kv: 11.0, slack_u0: 1.0, periods }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Liquidity {
    #[default]
    High,
    Medium,
    Low,
    None,
}

impl Liquidity {
    /// Share of the full offer book that is kept.
    pub fn keep_probability(self) -> f64 {
        match self {
            Liquidity::High => 1.0,
            Liquidity::Medium => 0.5,
            Liquidity::Low => 0.25,
            Liquidity::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferParams {
    pub price_min: f64,
    pub price_max: f64,
    pub quantity_mw: f64,
}

impl Default for OfferParams {
    fn default() -> Self {
        Self { price_min: 25.0, price_max: 35.0, quantity_mw: 0.5 }
    }
}

/// Offers in both directions at every non-slack bus and period, priced
/// uniformly in `[price_min, price_max]`, then thinned to the liquidity
/// level.
///
/// Prices and keep/drop draws are taken for the full book in a fixed order,
/// so ids and prices of surviving offers do not depend on the level.
pub fn generate_offers(network: &Network, liquidity: Liquidity, params: &OfferParams, seed: u64) -> Vec<Bid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = liquidity.keep_probability();
    let mut offers = Vec::new();
    let mut id = 0u64;
    for period in &network.periods {
        for bus in network.buses.iter().filter(|b| !b.is_slack) {
            for direction in [Direction::Up, Direction::Down] {
                id += 1;
                let price = rng.gen_range(params.price_min..=params.price_max);
                let draw: f64 = rng.gen();
                if draw < keep {
                    offers.push(Bid {
                        id,
                        bus: bus.id,
                        period: period.id,
                        direction,
                        kind: BidKind::Offer,
                        quantity_mw: params.quantity_mw,
                        price_eur_per_mw: price,
                    });
                }
            }
        }
    }
    offers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{validate_radial, RadialNetwork};

    #[test]
    fn bundled_case_is_a_valid_feeder() {
        let net = bundled_network();
        assert!(validate_radial(&net).is_valid());
        let radial = RadialNetwork::new(net).unwrap();
        assert_eq!(radial.n_buses(), 15);
        bundled_model().incidence(&radial).unwrap();
    }

    #[test]
    fn random_networks_are_radial_and_reproducible() {
        for seed in 0..20 {
            let p = RandomNetworkParams { buses: 3 + seed as usize * 2, periods: 2, base_mva: 1.0 };
            let net = random_network(&p, seed);
            assert!(validate_radial(&net).is_valid(), "seed {seed}");
            assert_eq!(net, random_network(&p, seed));
        }
    }

    #[test]
    fn high_liquidity_offers_everywhere_in_both_directions() {
        let net = bundled_network();
        let offers = generate_offers(&net, Liquidity::High, &OfferParams::default(), 7);
        assert_eq!(offers.len(), 28);
        assert!(offers.iter().all(|o| o.bus != 0 && (25.0..=35.0).contains(&o.price_eur_per_mw)));
    }

    #[test]
    fn thinning_keeps_ids_and_prices() {
        let net = bundled_network();
        let p = OfferParams::default();
        let high = generate_offers(&net, Liquidity::High, &p, 7);
        let medium = generate_offers(&net, Liquidity::Medium, &p, 7);
        let low = generate_offers(&net, Liquidity::Low, &p, 7);
        assert!(medium.len() < high.len() && low.len() <= medium.len());
        for o in medium.iter().chain(&low) {
            assert!(high.contains(o));
        }
        assert!(generate_offers(&net, Liquidity::None, &p, 7).is_empty());
    }
}
