//! Independent reference implementations used by the integration tests.
//! None of these call into the code they check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use flexreq_core::grid::{Bus, Line, Network, Period};
use flexreq_core::market::{Bid, BidKind, Direction, ZonePartition};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Path matrix by deletion: line `l` lies on the slack-to-`n` path iff
/// removing `l` disconnects `n` from the slack. Rows follow the line order,
/// columns the bus order of `net`.
pub fn path_matrix_by_deletion(net: &Network) -> Vec<Vec<u8>> {
    let ids: Vec<u32> = net.buses.iter().map(|b| b.id).collect();
    let idx = |id: u32| ids.iter().position(|&x| x == id).expect("known bus");
    let slack = net.buses.iter().position(|b| b.is_slack).expect("slack bus");
    (0..net.lines.len())
        .map(|skip| {
            let mut reached = vec![false; ids.len()];
            reached[slack] = true;
            let mut changed = true;
            while changed {
                changed = false;
                for (l, line) in net.lines.iter().enumerate() {
                    let (a, b) = (idx(line.from), idx(line.to));
                    if l != skip && reached[a] != reached[b] {
                        reached[a] = true;
                        reached[b] = true;
                        changed = true;
                    }
                }
            }
            reached.iter().map(|&r| u8::from(!r)).collect()
        })
        .collect()
}

/// Random radial feeder with shuffled, non-contiguous bus ids, the slack at
/// a random position, random line orientation and random line order.
pub fn random_feeder<R: Rng>(rng: &mut R, n: usize) -> Network {
    let mut ids: Vec<u32> = (0..1000).collect();
    ids.shuffle(rng);
    ids.truncate(n);
    let slack = rng.gen_range(0..n);
    let buses: Vec<Bus> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| Bus {
            id,
            v_min: 0.9,
            v_max: 1.1,
            p_inj: vec![if i == slack { 0.0 } else { rng.gen_range(-0.5..0.5) }],
            cos_phi: rng.gen_range(0.8..=1.0),
            is_slack: i == slack,
        })
        .collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    order.shuffle(rng);
    order.insert(0, slack);
    let mut lines = Vec::with_capacity(n - 1);
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        let child = order[k];
        let (from, to) = if rng.gen_bool(0.5) { (ids[parent], ids[child]) } else { (ids[child], ids[parent]) };
        lines.push(Line {
            from,
            to,
            r: rng.gen_range(0.001..0.05),
            x: rng.gen_range(0.001..0.05),
            s_rating: rng.gen_range(0.5..3.0),
        });
    }
    lines.shuffle(rng);
    Network { buses, lines, base_mva: 1.0, base_kv: 11.0, slack_u0: 1.0, periods: vec![Period { id: 0, dt_hours: 1.0 }] }
}

/// Maximizes `cᵀx` subject to `A x ≤ b`, `x ≥ 0`, where `b ≥ 0` so the
/// origin is a feasible start. Dense tableau with Bland's rule; `None` when
/// the problem is unbounded.
pub fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    const EPS: f64 = 1e-11;
    let (m, n) = (a.len(), c.len());
    assert!(b.iter().all(|&v| v >= 0.0), "origin must be feasible");
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    loop {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -EPS) else { break };
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(r) => {
                        let best = t[r][width - 1] / t[r][enter];
                        if ratio < best - EPS || ((ratio - best).abs() <= EPS && basis[i] < basis[r]) {
                            Some(i)
                        } else {
                            Some(r)
                        }
                    }
                };
            }
        }
        let r = leave?;
        let pivot = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= pivot;
        }
        for i in 0..=m {
            if i != r {
                let f = t[i][enter];
                if f != 0.0 {
                    for j in 0..width {
                        t[i][j] -= f * t[r][j];
                    }
                }
            }
        }
        basis[r] = enter;
    }
    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][width - 1];
        }
    }
    Some((t[m][width - 1], x))
}

/// Same problem as [`simplex_max`] solved by enumerating every basic point
/// (`n` active constraints out of `A x ≤ b` and `x ≥ 0`). Exponential; only
/// for tiny bounded instances.
pub fn vertex_enumeration_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn next(pick: &mut [usize], total: usize) -> bool {
        let n = pick.len();
        for i in (0..n).rev() {
            if pick[i] < total - n + i {
                pick[i] += 1;
                for k in i + 1..n {
                    pick[k] = pick[k - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let m = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
        let rhs = DVector::from_fn(n, |i, _| rows[pick[i]].1);
        if let Some(x) = m.lu().solve(&rhs) {
            let feasible = rows.iter().all(|(r, bound)| r.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() <= bound + 1e-9);
            if feasible && x.iter().all(|v| v.is_finite()) {
                let value: f64 = c.iter().zip(x.iter()).map(|(a, v)| a * v).sum();
                best = Some(best.map_or(value, |b: f64| b.max(value)));
            }
        }
        if !next(&mut pick, rows.len()) {
            break;
        }
    }
    best
}

/// Welfare-maximizing zonal matching written as an LP: accept `q_i ≤ Q_i`
/// per bid, with accepted requests not exceeding accepted offers in every
/// (zone, period, direction) cell. With positive offer prices the cell
/// balance is tight at the optimum.
pub fn clearing_lp_welfare(offers: &[Bid], requests: &[Bid], zones: &ZonePartition) -> f64 {
    let bids: Vec<&Bid> = offers.iter().chain(requests).collect();
    let n = bids.len();
    let mut c = Vec::with_capacity(n);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, bid) in bids.iter().enumerate() {
        c.push(match bid.kind {
            BidKind::Offer => -bid.price_eur_per_mw,
            BidKind::Request => bid.price_eur_per_mw,
        });
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        a.push(row);
        b.push(bid.quantity_mw);
    }
    let mut cells: BTreeMap<(usize, u32, Direction), Vec<f64>> = BTreeMap::new();
    for (i, bid) in bids.iter().enumerate() {
        let zone = zones.zone_of(bid.bus).expect("zoned bus");
        let row = cells.entry((zone, bid.period, bid.direction)).or_insert_with(|| vec![0.0; n]);
        row[i] = match bid.kind {
            BidKind::Offer => -1.0,
            BidKind::Request => 1.0,
        };
    }
    for row in cells.into_values() {
        a.push(row);
        b.push(0.0);
    }
    simplex_max(&c, &a, &b).expect("bounded").0
}

/// Standard normal CDF from the all-positive series
/// `erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`.
pub fn normal_cdf_series(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    while term > 1e-18 * sum {
        k += 1.0;
        term *= 2.0 * x * x / (2.0 * k + 1.0);
        sum += term;
    }
    let erf = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum;
    if z >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// `Φ⁻¹(p)` by bisection on [`normal_cdf_series`].
pub fn quantile_bisect(p: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0, 9.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_series(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random book of divisible bids on `buses` with ids from `first_id`.
/// Prices are whole euros so that ties occur.
pub fn random_book<R: Rng>(
    rng: &mut R,
    buses: &[u32],
    offers: usize,
    requests: usize,
    first_id: u64,
) -> (Vec<Bid>, Vec<Bid>) {
    let mut id = first_id - 1;
    let mut make = |rng: &mut R, kind: BidKind, price: std::ops::Range<u32>| {
        id += 1;
        Bid {
            id,
            bus: buses[rng.gen_range(0..buses.len())],
            period: rng.gen_range(0..2),
            direction: if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down },
            kind,
            quantity_mw: (rng.gen_range(0.1..2.0f64) * 100.0).round() / 100.0,
            price_eur_per_mw: f64::from(rng.gen_range(price)),
        }
    };
    let o = (0..offers).map(|_| make(rng, BidKind::Offer, 20..60)).collect();
    let r = (0..requests).map(|_| make(rng, BidKind::Request, 30..80)).collect();
    (o, r)
}
