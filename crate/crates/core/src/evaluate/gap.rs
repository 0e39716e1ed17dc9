//! Welfare of three nested clearings of the same request volume:
//! unconstrained (any offer delivers fully), share-constrained (offer `n`
//! delivers only the share `a_n` of its volume), and nodal (each node's
//! request is met by its own offers).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvaluateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalRequest {
    pub bus: u32,
    pub mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapOffer {
    pub bus: u32,
    pub mw: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapInstance {
    pub requests: Vec<NodalRequest>,
    pub offers: Vec<GapOffer>,
    /// Permitted share per bus; buses not listed have share 1.
    #[serde(default)]
    pub shares: BTreeMap<u32, f64>,
    /// Request price `λ̂^R` (€/MW).
    pub lambda_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiquidityLevel {
    /// Enough offers overall and no share restriction.
    SystemWide = 1,
    /// Every node can cover its own request at the cheapest eligible price.
    PerNode = 2,
    /// Enough offers overall, but shares restrict delivery.
    Restricted = 3,
    /// The share-constrained clearing cannot meet the request at all.
    Insufficient = 4,
}

impl LiquidityLevel {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn description(self) -> &'static str {
        match self {
            LiquidityLevel::SystemWide => "sufficient liquidity in the system",
            LiquidityLevel::PerNode => "sufficient liquidity per node",
            LiquidityLevel::Restricted => "sufficient liquidity under share restrictions",
            LiquidityLevel::Insufficient => "insufficient liquidity in the system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub l_u: f64,
    pub l_sc: f64,
    pub l_fr: f64,
    pub feasible_u: bool,
    pub feasible_sc: bool,
    pub feasible_fr: bool,
    /// `1 - L_SC/L_U`; `None` when `L_U ≤ 0`.
    pub xi_sc: Option<f64>,
    /// `1 - L_FR/L_U`.
    pub xi_fr: Option<f64>,
    /// `1 - L_FR/L_SC`; `None` when `L_SC ≤ 0`.
    pub xi_fs: Option<f64>,
    pub level: LiquidityLevel,
    pub description: String,
}

/// Best welfare `Σ (λ̂ - λ_i) q_i` with `Σ q_i = demand` and
/// `0 ≤ q_i ≤ cap_i`, by taking the cheapest capacity first. `None` when the
/// capacity does not suffice.
fn greedy(lambda_r: f64, mut supply: Vec<(f64, f64)>, demand: f64) -> Option<f64> {
    supply.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = demand;
    let mut value = 0.0;
    for (price, cap) in supply {
        if left <= 0.0 {
            break;
        }
        let q = cap.min(left);
        value += (lambda_r - price) * q;
        left -= q;
    }
    (left <= demand.abs() * 1e-12).then_some(value)
}

fn ratio_gap(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| 1.0 - num / den)
}

/// Solves the three clearings and classifies the instance.
///
/// Only offers priced at or below `λ̂^R` take part. An infeasible clearing
/// counts as zero welfare.
pub fn gap_bounds(instance: &GapInstance) -> Result<GapReport, EvaluateError> {
    let share = |bus: u32| instance.shares.get(&bus).copied().unwrap_or(1.0);
    for (&bus, &a) in &instance.shares {
        if !(a > 0.0 && a <= 1.0) {
            return Err(EvaluateError::Share { bus, share: a });
        }
    }
    let eligible: Vec<&GapOffer> =
        instance.offers.iter().filter(|o| o.price <= instance.lambda_r && o.mw > 0.0).collect();
    let total: f64 = instance.requests.iter().map(|r| r.mw).sum();
    let lr = instance.lambda_r;

    let u = greedy(lr, eligible.iter().map(|o| (o.price, o.mw)).collect(), total);
    let sc = greedy(lr, eligible.iter().map(|o| (o.price, share(o.bus) * o.mw)).collect(), total);

    let mut demand: BTreeMap<u32, f64> = BTreeMap::new();
    for r in &instance.requests {
        *demand.entry(r.bus).or_default() += r.mw;
    }
    let mut fr = Some(0.0);
    for (&bus, &d) in &demand {
        let local = eligible.iter().filter(|o| o.bus == bus).map(|o| (o.price, share(bus) * o.mw)).collect();
        fr = match (fr, greedy(lr, local, d)) {
            (Some(acc), Some(v)) => Some(acc + v),
            _ => None,
        };
    }

    let (l_u, l_sc, l_fr) = (u.unwrap_or(0.0), sc.unwrap_or(0.0), fr.unwrap_or(0.0));
    let min_price = eligible.iter().map(|o| o.price).fold(f64::INFINITY, f64::min);
    let per_node = demand.iter().all(|(&bus, &d)| {
        let cheapest: f64 =
            eligible.iter().filter(|o| o.bus == bus && o.price == min_price).map(|o| share(bus) * o.mw).sum();
        cheapest >= d
    });
    let level = if sc.is_none() {
        LiquidityLevel::Insufficient
    } else if per_node {
        LiquidityLevel::PerNode
    } else if instance.shares.values().all(|&a| a == 1.0) {
        LiquidityLevel::SystemWide
    } else {
        LiquidityLevel::Restricted
    };
    Ok(GapReport {
        l_u,
        l_sc,
        l_fr,
        feasible_u: u.is_some(),
        feasible_sc: sc.is_some(),
        feasible_fr: fr.is_some(),
        xi_sc: ratio_gap(l_sc, l_u),
        xi_fr: ratio_gap(l_fr, l_u),
        xi_fs: ratio_gap(l_fr, l_sc),
        level,
        description: level.description().to_owned(),
    })
}
