mod support;

use std::collections::BTreeMap;

use flexreq_core::evaluate::{gap_bounds, GapInstance, GapOffer, NodalRequest};
use flexreq_core::grid::{build_path_matrix, lindistflow_solve, RadialNetwork};
use flexreq_core::market::{clear_deterministic, ZonePartition};
use flexreq_core::socp::{solve, ConeProgram, LinExpr, SolverSettings};
use flexreq_core::uncertainty::{sensitivity_matrices, uncertainty_margin};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn feeder(seed: u64, n: usize) -> RadialNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RadialNetwork::new(support::random_feeder(&mut rng, n)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flows_are_linear_in_injections(seed in any::<u64>(), n in 2usize..25, a in -3.0f64..3.0) {
        let net = feeder(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zero = vec![0.0; n];
        let fx = lindistflow_solve(&net, &x, &zero).unwrap();
        let fy = lindistflow_solve(&net, &zero, &y).unwrap();
        let combined: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let fxy = lindistflow_solve(&net, &combined, &zero).unwrap();
        let u0 = net.slack_u0();
        for l in 0..net.n_lines() {
            prop_assert!(close(fxy.p_flow[l], a * fx.p_flow[l] + fy.p_flow[l], 1e-12));
            prop_assert!(close(fxy.q_flow[l], a * fx.q_flow[l] + fy.q_flow[l], 1e-12));
        }
        for b in 0..n {
            prop_assert!(close(fxy.u[b] - u0, a * (fx.u[b] - u0) + (fy.u[b] - u0), 1e-12));
        }
    }

    #[test]
    fn voltage_sensitivity_telescopes_along_paths(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = support::random_feeder(&mut rng, n);
        let rows = support::path_matrix_by_deletion(&raw);
        let net = RadialNetwork::new(raw).unwrap();
        let path = build_path_matrix(&net);
        let gamma = DMatrix::from_fn(n, 2, |b, _| if b != net.slack() && rng.gen_bool(0.3) { 1.0 } else { 0.0 });
        let alpha: Vec<f64> = (0..n).map(|b| if b == net.slack() { 0.0 } else { rng.gen_range(-0.5..0.5) }).collect();
        let sens = sensitivity_matrices(&net, &path, &gamma, &alpha).unwrap();
        for b in 0..n {
            for s in 0..2 {
                let direct: f64 = (0..net.n_lines())
                    .filter(|&l| rows[l][b] == 1)
                    .map(|l| {
                        let line = &net.lines()[l];
                        -2.0 * (line.r * sens.b_p[(l, s)] + line.x * sens.b_q[(l, s)])
                    })
                    .sum();
                prop_assert!(close(sens.b_u[(b, s)], direct, 1e-12));
            }
        }
    }

    #[test]
    fn margins_are_positively_homogeneous(
        b in prop::collection::vec(-2.0f64..2.0, 3),
        c in -5.0f64..5.0,
        scale in 0.01f64..10.0,
        eps in 0.01f64..0.3,
    ) {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, -0.2, 0.1, -0.2, 0.5]);
        let m = uncertainty_margin(&b, &sigma, eps, 1.0).unwrap();
        let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
        prop_assert!(close(uncertainty_margin(&cb, &sigma, eps, 1.0).unwrap(), c.abs() * m, 1e-12));
        let scaled = &sigma * (scale * scale);
        prop_assert!(close(uncertainty_margin(&b, &scaled, eps, 1.0).unwrap(), scale * m, 1e-12));
    }

    #[test]
    fn merit_order_matches_the_lp(seed in any::<u64>(), buses in 1u32..6, offers in 0usize..8, requests in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u32> = (0..buses).collect();
        let (o, r) = support::random_book(&mut rng, &ids, offers, requests, 1);
        let zones = ZonePartition::canonical(vec![
            ids.iter().copied().filter(|b| b % 2 == 0).collect(),
            ids.iter().copied().filter(|b| b % 2 == 1).collect(),
        ]);
        let result = clear_deterministic(&o, &r, &zones).unwrap();
        prop_assert!(close(result.welfare, support::clearing_lp_welfare(&o, &r, &zones), 1e-9));
    }

    #[test]
    fn merging_two_zones_never_lowers_welfare(seed in any::<u64>(), buses in 2u32..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u32> = (0..buses).collect();
        let (o, r) = support::random_book(&mut rng, &ids, 8, 8, 1);
        let mut zones: Vec<Vec<u32>> = ids.iter().map(|&b| vec![b]).collect();
        let before = clear_deterministic(&o, &r, &ZonePartition::canonical(zones.clone())).unwrap().welfare;
        let a = zones.pop().unwrap();
        let k = rng.gen_range(0..zones.len());
        zones[k].extend(a);
        let after = clear_deterministic(&o, &r, &ZonePartition::canonical(zones)).unwrap().welfare;
        prop_assert!(after >= before - 1e-9);
    }

    #[test]
    fn price_and_volume_scaling(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u32> = (0..4).collect();
        let (o, r) = support::random_book(&mut rng, &ids, 6, 6, 1);
        let zones = ZonePartition::canonical(vec![vec![0, 1], vec![2, 3]]);
        let base = clear_deterministic(&o, &r, &zones).unwrap();
        let priced = |bids: &[flexreq_core::market::Bid]| bids.iter().cloned().map(|mut b| { b.price_eur_per_mw *= c; b }).collect::<Vec<_>>();
        let sized = |bids: &[flexreq_core::market::Bid]| bids.iter().cloned().map(|mut b| { b.quantity_mw *= c; b }).collect::<Vec<_>>();
        let by_price = clear_deterministic(&priced(&o), &priced(&r), &zones).unwrap();
        prop_assert!(close(by_price.welfare, c * base.welfare, 1e-9));
        for (id, q) in &base.accepted {
            prop_assert!(close(by_price.accepted_mw(*id), *q, 1e-12));
        }
        let by_volume = clear_deterministic(&sized(&o), &sized(&r), &zones).unwrap();
        prop_assert!(close(by_volume.welfare, c * base.welfare, 1e-9));
    }

    #[test]
    fn gap_bounds_are_ordered(seed in any::<u64>(), nodes in 1u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let requests = (1..=nodes).map(|bus| NodalRequest { bus, mw: rng.gen_range(0.0..2.0) }).collect();
        let offers = (0..rng.gen_range(0..10))
            .map(|_| GapOffer { bus: rng.gen_range(1..=nodes), mw: rng.gen_range(0.0..2.0), price: rng.gen_range(10.0..90.0) })
            .collect();
        let shares: BTreeMap<u32, f64> = (1..=nodes).map(|b| (b, rng.gen_range(0.05..=1.0))).collect();
        let r = gap_bounds(&GapInstance { requests, offers, shares, lambda_r: 70.0 }).unwrap();
        prop_assert!(r.l_fr <= r.l_sc + 1e-9 && r.l_sc <= r.l_u + 1e-9);
        prop_assert!(r.l_u >= 0.0);
        if let Some(x) = r.xi_fs {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn lp_solutions_respect_weak_duality(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prog = ConeProgram::new();
        let vars: Vec<_> = (0..n).map(|j| prog.add_nonneg_var(format!("x{j}"))).collect();
        for i in 0..=m {
            let mut lhs = LinExpr::zero();
            for &v in &vars {
                lhs.push(v, if i == 0 { rng.gen_range(0.1..2.0) } else { rng.gen_range(-1.0..2.0) });
            }
            prog.add_le(format!("r{i}"), lhs, rng.gen_range(0.0..5.0));
        }
        let mut obj = LinExpr::zero();
        for &v in &vars {
            obj.push(v, rng.gen_range(-2.0..1.0));
        }
        prog.set_objective(obj);
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        prop_assert!(sol.is_optimal());
        // The origin is feasible with objective 0.
        prop_assert!(sol.objective <= 1e-7);
        prop_assert!(sol.dual_objective <= sol.objective + 1e-7 * (1.0 + sol.objective.abs()));
        let report = prog.evaluate(&sol.values).unwrap();
        prop_assert!(report.primal_eq <= 1e-7 && report.cone <= 1e-7);
    }
}
