//! Flexibility market clearing: zonal merit order between DSO requests and
//! provider offers, congestion-based zones, and the chance-constrained
//! stochastic benchmark.

mod io;
mod stochastic;
mod zones;

pub use io::{
    read_bids_csv, read_request_book_json, read_zones_json, request_bids, write_bids_csv, write_json, write_zones_json,
};
pub use stochastic::{
    build_stochastic_program, clear_stochastic, CostBreakdown, NodePolicy, StochasticPrices, StochasticProblem,
    StochasticResult, StochasticVars, ACTIVATION_COST_MODEL,
};
pub use zones::{zones_from_congestion, CongestionStudy};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexreq::FlexReqError;
use crate::grid::{GridError, RadialNetwork};
use crate::socp::SocpError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("bid {id} at bus {bus} is not in any zone")]
    BusNotInZone { id: u64, bus: u32 },
    #[error("duplicate bid id {0}")]
    DuplicateBid(u64),
    #[error("bid {id} has invalid quantity {quantity}")]
    Quantity { id: u64, quantity: f64 },
    #[error("bid {id} is not {expected:?}")]
    Kind { id: u64, expected: BidKind },
    #[error("zones are not a partition: {0}")]
    Partition(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Socp(#[from] SocpError),
    /// Infeasibility and solver failures share the request-creation reporting.
    #[error(transparent)]
    Request(#[from] FlexReqError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BidKind {
    Offer,
    Request,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub id: u64,
    pub bus: u32,
    pub period: u32,
    pub direction: Direction,
    pub kind: BidKind,
    pub quantity_mw: f64,
    pub price_eur_per_mw: f64,
}

/// Groups of buses within which bids may be matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZonePartition {
    pub zones: Vec<Vec<u32>>,
}

impl ZonePartition {
    /// Sorts buses within zones and zones by their smallest bus.
    pub fn canonical(mut zones: Vec<Vec<u32>>) -> Self {
        for z in &mut zones {
            z.sort_unstable();
        }
        zones.retain(|z| !z.is_empty());
        zones.sort();
        Self { zones }
    }

    /// One zone per bus.
    pub fn nodal(network: &RadialNetwork) -> Self {
        Self::canonical(network.buses().iter().map(|b| vec![b.id]).collect())
    }

    /// Every bus in one zone.
    pub fn single(network: &RadialNetwork) -> Self {
        Self::canonical(vec![network.buses().iter().map(|b| b.id).collect()])
    }

    pub fn zone_of(&self, bus: u32) -> Option<usize> {
        self.zones.iter().position(|z| z.contains(&bus))
    }

    /// Checks that the zones are disjoint and cover exactly `buses`.
    pub fn validate(&self, buses: &[u32]) -> Result<(), MarketError> {
        let mut seen = BTreeSet::new();
        for &b in self.zones.iter().flatten() {
            if !seen.insert(b) {
                return Err(MarketError::Partition(format!("bus {b} appears twice")));
            }
        }
        let all: BTreeSet<u32> = buses.iter().copied().collect();
        if seen != all {
            let missing: Vec<_> = all.difference(&seen).collect();
            let extra: Vec<_> = seen.difference(&all).collect();
            return Err(MarketError::Partition(format!("missing {missing:?}, unknown {extra:?}")));
        }
        Ok(())
    }
}

/// Matched volume in one (zone, period, direction) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVolume {
    pub zone: usize,
    pub period: u32,
    pub direction: Direction,
    pub volume_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicResult {
    /// Accepted MW per bid id; bids left out were not accepted.
    pub accepted: BTreeMap<u64, f64>,
    pub cells: Vec<CellVolume>,
    /// Pay-as-bid payment of the DSO: Σ accepted request × request price.
    pub request_payment: f64,
    /// Σ accepted offer × offer price.
    pub offer_cost: f64,
    /// `request_payment - offer_cost`.
    pub welfare: f64,
}

impl DeterministicResult {
    pub fn accepted_mw(&self, id: u64) -> f64 {
        self.accepted.get(&id).copied().unwrap_or(0.0)
    }
}

fn check_book(bids: &[Bid], kind: BidKind, ids: &mut BTreeSet<u64>) -> Result<(), MarketError> {
    for b in bids {
        if b.kind != kind {
            return Err(MarketError::Kind { id: b.id, expected: kind });
        }
        if !(b.quantity_mw >= 0.0) || !b.quantity_mw.is_finite() || !b.price_eur_per_mw.is_finite() {
            return Err(MarketError::Quantity { id: b.id, quantity: b.quantity_mw });
        }
        if !ids.insert(b.id) {
            return Err(MarketError::DuplicateBid(b.id));
        }
    }
    Ok(())
}

/// Welfare-maximizing zonal matching by merit order.
///
/// Per (zone, period, direction) offers are taken cheapest first and requests
/// highest price first, ties by ascending id, and matched while the offer
/// price does not exceed the request price. Bids are divisible.
pub fn clear_deterministic(
    offers: &[Bid],
    requests: &[Bid],
    zones: &ZonePartition,
) -> Result<DeterministicResult, MarketError> {
    let mut ids = BTreeSet::new();
    check_book(offers, BidKind::Offer, &mut ids)?;
    check_book(requests, BidKind::Request, &mut ids)?;

    type Cell = (usize, u32, Direction);
    let mut cells: BTreeMap<Cell, (Vec<&Bid>, Vec<&Bid>)> = BTreeMap::new();
    for b in offers.iter().chain(requests) {
        let zone = zones.zone_of(b.bus).ok_or(MarketError::BusNotInZone { id: b.id, bus: b.bus })?;
        let entry = cells.entry((zone, b.period, b.direction)).or_default();
        match b.kind {
            BidKind::Offer => entry.0.push(b),
            BidKind::Request => entry.1.push(b),
        }
    }

    let mut result = DeterministicResult {
        accepted: BTreeMap::new(),
        cells: Vec::new(),
        request_payment: 0.0,
        offer_cost: 0.0,
        welfare: 0.0,
    };
    for ((zone, period, direction), (mut sell, mut buy)) in cells {
        sell.sort_by(|a, b| a.price_eur_per_mw.total_cmp(&b.price_eur_per_mw).then(a.id.cmp(&b.id)));
        buy.sort_by(|a, b| b.price_eur_per_mw.total_cmp(&a.price_eur_per_mw).then(a.id.cmp(&b.id)));
        let (mut i, mut j) = (0, 0);
        let mut left_o = sell.first().map_or(0.0, |b| b.quantity_mw);
        let mut left_r = buy.first().map_or(0.0, |b| b.quantity_mw);
        let mut volume = 0.0;
        while i < sell.len() && j < buy.len() && sell[i].price_eur_per_mw <= buy[j].price_eur_per_mw {
            let q = left_o.min(left_r);
            if q > 0.0 {
                *result.accepted.entry(sell[i].id).or_default() += q;
                *result.accepted.entry(buy[j].id).or_default() += q;
                result.offer_cost += q * sell[i].price_eur_per_mw;
                result.request_payment += q * buy[j].price_eur_per_mw;
                volume += q;
            }
            left_o -= q;
            left_r -= q;
            if left_o <= 0.0 {
                i += 1;
                left_o = sell.get(i).map_or(0.0, |b| b.quantity_mw);
            }
            if left_r <= 0.0 {
                j += 1;
                left_r = buy.get(j).map_or(0.0, |b| b.quantity_mw);
            }
        }
        if volume > 0.0 {
            result.cells.push(CellVolume { zone, period, direction, volume_mw: volume });
        }
    }
    result.welfare = result.request_payment - result.offer_cost;
    Ok(result)
}

/// Nodal up/down capacity (MW) bought by accepted offers, keyed by
/// `(bus, period)`.
pub fn procured_capacity(offers: &[Bid], accepted: &BTreeMap<u64, f64>) -> BTreeMap<(u32, u32), (f64, f64)> {
    let mut out: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
    for o in offers.iter().filter(|o| o.kind == BidKind::Offer) {
        let q = accepted.get(&o.id).copied().unwrap_or(0.0);
        if q > 0.0 {
            let e = out.entry((o.bus, o.period)).or_default();
            match o.direction {
                Direction::Up => e.0 += q,
                Direction::Down => e.1 += q,
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bid(id: u64, bus: u32, kind: BidKind, q: f64, price: f64) -> Bid {
        Bid { id, bus, period: 0, direction: Direction::Up, kind, quantity_mw: q, price_eur_per_mw: price }
    }

    fn one_zone() -> ZonePartition {
        ZonePartition::canonical(vec![vec![0, 1, 2, 3, 4]])
    }

    #[test]
    fn single_price_crossing() {
        let offers = [bid(1, 1, BidKind::Offer, 1.0, 25.0), bid(2, 2, BidKind::Offer, 1.0, 35.0)];
        let requests = [bid(3, 3, BidKind::Request, 2.0, 30.0)];
        let r = clear_deterministic(&offers, &requests, &one_zone()).unwrap();
        assert_eq!(r.accepted_mw(1), 1.0);
        assert_eq!(r.accepted_mw(2), 0.0);
        assert_eq!(r.accepted_mw(3), 1.0);
        assert_eq!(r.welfare, 5.0);
        assert_eq!(r.request_payment, 30.0);
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn nodal_zones_isolate_buses() {
        let zones = ZonePartition::canonical((0..5).map(|b| vec![b]).collect());
        let offers = [bid(1, 4, BidKind::Offer, 1.0, 25.0)];
        let requests = [bid(2, 3, BidKind::Request, 1.0, 70.0)];
        let r = clear_deterministic(&offers, &requests, &zones).unwrap();
        assert!(r.accepted.is_empty());
        assert_eq!(r.welfare, 0.0);
    }

    #[test]
    fn directions_and_periods_do_not_mix() {
        let mut down = bid(1, 1, BidKind::Offer, 1.0, 25.0);
        down.direction = Direction::Down;
        let mut later = bid(2, 1, BidKind::Offer, 1.0, 25.0);
        later.period = 1;
        let r = clear_deterministic(&[down, later], &[bid(3, 2, BidKind::Request, 1.0, 70.0)], &one_zone()).unwrap();
        assert!(r.accepted.is_empty());
    }

    #[test]
    fn equal_prices_prefer_lower_ids() {
        let offers = [bid(5, 1, BidKind::Offer, 1.0, 30.0), bid(4, 2, BidKind::Offer, 1.0, 30.0)];
        let r = clear_deterministic(&offers, &[bid(9, 3, BidKind::Request, 1.0, 40.0)], &one_zone()).unwrap();
        assert_eq!(r.accepted_mw(4), 1.0);
        assert_eq!(r.accepted_mw(5), 0.0);
    }

    #[test]
    fn malformed_books_are_rejected() {
        let zones = one_zone();
        let o = bid(1, 1, BidKind::Offer, 1.0, 25.0);
        assert!(matches!(
            clear_deterministic(std::slice::from_ref(&o), &[bid(1, 2, BidKind::Request, 1.0, 30.0)], &zones),
            Err(MarketError::DuplicateBid(1))
        ));
        assert!(matches!(
            clear_deterministic(&[bid(2, 9, BidKind::Offer, 1.0, 25.0)], &[], &zones),
            Err(MarketError::BusNotInZone { id: 2, bus: 9 })
        ));
        assert!(clear_deterministic(&[bid(3, 1, BidKind::Offer, -1.0, 25.0)], &[], &zones).is_err());
        assert!(clear_deterministic(&[], &[o], &zones).is_err());
    }

    #[test]
    fn partition_validation() {
        let z = ZonePartition::canonical(vec![vec![2, 0], vec![1]]);
        assert_eq!(z.zones, vec![vec![0, 2], vec![1]]);
        assert!(z.validate(&[0, 1, 2]).is_ok());
        assert!(z.validate(&[0, 1, 2, 3]).is_err());
        assert!(ZonePartition::canonical(vec![vec![0, 1], vec![1, 2]]).validate(&[0, 1, 2]).is_err());
    }
}
