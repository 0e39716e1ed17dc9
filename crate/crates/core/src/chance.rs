//! LinDistFlow network constraints with Gaussian uncertainty margins, shared
//! by request creation and the stochastic market.
//!
//! Realized injections are `p_inj - Γξ + ctrl + α·1ᵀξ`, so a positive
//! forecast error `ξ` is missing generation and the affine response `α`
//! covers it.

use nalgebra::DMatrix;

use crate::grid::{GridError, PathMatrix, RadialNetwork};
use crate::socp::{ConeProgram, LinExpr, VarId};
use crate::uncertainty::{EpsilonConfig, ForecastErrorModel, MarginLevels, UncertaintyError};

/// Everything the margin terms need, precomputed once per problem.
#[derive(Debug, Clone)]
pub struct UncertaintyContext {
    /// Buses × sources incidence.
    pub gamma: DMatrix<f64>,
    /// `L` with `L Lᵀ = Σ`.
    pub factor: DMatrix<f64>,
    /// Standard deviation of `1ᵀξ`.
    pub sigma_tot: f64,
    pub levels: MarginLevels,
}

impl UncertaintyContext {
    pub fn new(
        network: &RadialNetwork,
        model: &ForecastErrorModel,
        eps: &EpsilonConfig,
    ) -> Result<Self, UncertaintyError> {
        let factor = model.factor()?;
        // σ_tot = ‖Lᵀ1‖ keeps it consistent with a regularized factor
        let sigma_tot = factor.row_sum().norm();
        Ok(Self { gamma: model.incidence(network)?, factor, sigma_tot, levels: eps.levels()? })
    }

    pub fn n_sources(&self) -> usize {
        self.gamma.ncols()
    }

    /// `z · Lᵀ b` for a per-source sensitivity vector `b`.
    pub fn margin_vector(&self, z: f64, b: &[LinExpr]) -> Vec<LinExpr> {
        let u = self.n_sources();
        (0..u)
            .map(|j| {
                let mut e = LinExpr::zero();
                for (s, bs) in b.iter().enumerate() {
                    let l = self.factor[(s, j)];
                    if l != 0.0 {
                        e += bs.clone() * (z * l);
                    }
                }
                e.simplified()
            })
            .collect()
    }

    /// Margin vector of a quantity that moves by `coef · 1ᵀξ`.
    pub fn total_margin(&self, z: f64, coef: impl Into<LinExpr>) -> Vec<LinExpr> {
        vec![coef.into() * (z * self.sigma_tot)]
    }
}

/// Decision variables of the network block.
#[derive(Debug, Clone)]
pub struct NetworkVars {
    pub p_flow: Vec<VarId>,
    pub q_flow: Vec<VarId>,
    pub k_p: Vec<VarId>,
    pub k_q: Vec<VarId>,
    /// Squared voltage per bus; a constant at the slack.
    pub u: Vec<LinExpr>,
    /// Elastic slacks with the label of the relaxed constraint.
    pub elastic: Vec<(VarId, String)>,
}

impl NetworkVars {
    /// Sum of elastic slacks, for the penalty term.
    pub fn elastic_total(&self) -> LinExpr {
        self.elastic.iter().fold(LinExpr::zero(), |acc, (v, _)| acc + *v)
    }
}

pub(crate) fn line_tag(network: &RadialNetwork, l: usize) -> String {
    let line = &network.lines()[l];
    format!("{}-{}", line.from, line.to)
}

/// Adds flows, voltages, ratings and their chance-constraint margins for one
/// period.
///
/// `ctrl[n]` is the nominal controllable injection and `alpha[n]` its
/// response to the total error. With `elastic`, voltage and rating limits get
/// nonnegative slacks that the caller should penalize.
#[allow(clippy::too_many_arguments)]
pub fn add_network_block(
    prog: &mut ConeProgram,
    network: &RadialNetwork,
    path: &PathMatrix,
    ctx: &UncertaintyContext,
    period: usize,
    ctrl: &[LinExpr],
    alpha: &[LinExpr],
    elastic: bool,
) -> Result<NetworkVars, GridError> {
    let n = network.n_buses();
    for v in [ctrl, alpha] {
        if v.len() != n {
            return Err(GridError::Dimension { expected: n, got: v.len() });
        }
    }
    let inj = network.base_injections(period)?;
    let k = network.k();
    let u_src = ctx.n_sources();
    let lv = &ctx.levels;
    let mut elastic_vars = Vec::new();
    let mut relax = |prog: &mut ConeProgram, label: &str| -> LinExpr {
        if elastic {
            let e = prog.add_nonneg_var(format!("elastic[{label}]"));
            elastic_vars.push((e, label.to_owned()));
            LinExpr::from(e)
        } else {
            LinExpr::zero()
        }
    };

    let nl = network.n_lines();
    let mut p_flow = Vec::with_capacity(nl);
    let mut q_flow = Vec::with_capacity(nl);
    let mut k_p = Vec::with_capacity(nl);
    let mut k_q = Vec::with_capacity(nl);
    let mut b_p: Vec<Vec<LinExpr>> = Vec::with_capacity(nl);
    let mut b_q: Vec<Vec<LinExpr>> = Vec::with_capacity(nl);

    for l in 0..nl {
        let tag = line_tag(network, l);
        let p = prog.add_var(format!("P[{tag}]"));
        let q = prog.add_var(format!("Q[{tag}]"));
        let mut p_def = LinExpr::from(p);
        let mut q_def = LinExpr::from(q);
        let mut rhs_p = 0.0;
        let mut rhs_q = 0.0;
        let mut bp = vec![LinExpr::zero(); u_src];
        let mut bq = vec![LinExpr::zero(); u_src];
        for m in path.downstream(l) {
            p_def += ctrl[m].clone();
            q_def += ctrl[m].clone() * k[m];
            rhs_p -= inj[m];
            rhs_q -= k[m] * inj[m];
            for s in 0..u_src {
                let dev = LinExpr::constant(ctx.gamma[(m, s)]) - alpha[m].clone();
                bq[s] += dev.clone() * k[m];
                bp[s] += dev;
            }
        }
        prog.add_eq(format!("flow_p[{tag}]"), p_def, rhs_p);
        prog.add_eq(format!("flow_q[{tag}]"), q_def, rhs_q);
        let bp: Vec<LinExpr> = bp.iter().map(LinExpr::simplified).collect();
        let bq: Vec<LinExpr> = bq.iter().map(LinExpr::simplified).collect();

        let kp = prog.add_var(format!("kP[{tag}]"));
        let kq = prog.add_var(format!("kQ[{tag}]"));
        let mp = ctx.margin_vector(lv.flow_p, &bp);
        prog.add_soc(format!("p_hi[{tag}]"), kp - p, mp.clone());
        prog.add_soc(format!("p_lo[{tag}]"), kp + p, mp);
        prog.add_soc(format!("p_aux[{tag}]"), kp, ctx.margin_vector(lv.aux_p, &bp));
        let mq = ctx.margin_vector(lv.flow_q, &bq);
        prog.add_soc(format!("q_hi[{tag}]"), kq - q, mq.clone());
        prog.add_soc(format!("q_lo[{tag}]"), kq + q, mq);
        prog.add_soc(format!("q_aux[{tag}]"), kq, ctx.margin_vector(lv.aux_q, &bq));
        let label = format!("rating[{tag}]");
        let slack = relax(prog, &label);
        let s_bar = network.lines()[l].s_rating;
        prog.add_soc(label, slack + s_bar, vec![kp.into(), kq.into()]);

        p_flow.push(p);
        q_flow.push(q);
        k_p.push(kp);
        k_q.push(kq);
        b_p.push(bp);
        b_q.push(bq);
    }

    let mut u: Vec<LinExpr> = vec![LinExpr::zero(); n];
    let mut b_u: Vec<Vec<LinExpr>> = vec![vec![LinExpr::zero(); u_src]; n];
    u[network.slack()] = LinExpr::constant(network.slack_u0());
    for &bus in network.order() {
        let Some(l) = network.feeder_line(bus) else { continue };
        let line = &network.lines()[l];
        let parent = network.line_parent(l);
        let id = network.buses()[bus].id;
        let var = prog.add_var(format!("u[{id}]"));
        let drop = LinExpr::from(p_flow[l]) * (2.0 * line.r) + LinExpr::from(q_flow[l]) * (2.0 * line.x);
        prog.add_eq(format!("vdrop[{id}]"), LinExpr::from(var) - u[parent].clone() + drop, 0.0);
        u[bus] = var.into();
        b_u[bus] = (0..u_src)
            .map(|s| {
                (b_u[parent][s].clone() - (b_p[l][s].clone() * (2.0 * line.r) + b_q[l][s].clone() * (2.0 * line.x)))
                    .simplified()
            })
            .collect();

        let b = &network.buses()[bus];
        let mu = ctx.margin_vector(lv.voltage, &b_u[bus]);
        let label = format!("v_max[{id}]");
        let slack = relax(prog, &label);
        prog.add_soc(label, slack + b.v_max * b.v_max - u[bus].clone(), mu.clone());
        let label = format!("v_min[{id}]");
        let slack = relax(prog, &label);
        prog.add_soc(label, slack + u[bus].clone() - b.v_min * b.v_min, mu);
    }

    Ok(NetworkVars { p_flow, q_flow, k_p, k_q, u, elastic: elastic_vars })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testing::{bus, line, network};
    use crate::grid::build_path_matrix;
    use crate::socp::{solve, SolverSettings};
    use crate::uncertainty::{sensitivity_matrices, Source};

    fn three_bus() -> RadialNetwork {
        let mut net = network(
            vec![bus(0, 0.0, true), bus(1, -0.3, false), bus(2, 0.2, false)],
            vec![line(0, 1), line(1, 2)],
        );
        for b in &mut net.buses {
            b.cos_phi = 0.95;
        }
        RadialNetwork::new(net).unwrap()
    }

    fn context(net: &RadialNetwork) -> UncertaintyContext {
        let model = ForecastErrorModel::new(
            vec![Source { id: "w".into(), bus: 2 }, Source { id: "v".into(), bus: 1 }],
            DMatrix::from_row_slice(2, 2, &[0.01, 0.002, 0.002, 0.02]),
        )
        .unwrap();
        UncertaintyContext::new(net, &model, &EpsilonConfig::default()).unwrap()
    }

    #[test]
    fn margin_vectors_match_sensitivity_matrices() {
        // Fix α through equalities and compare the voltage-margin norm with
        // the dense sensitivity formula.
        let net = three_bus();
        let path = build_path_matrix(&net);
        let ctx = context(&net);
        let alpha_val = [0.0, 0.4, -0.4];
        let mut prog = ConeProgram::new();
        let alpha: Vec<LinExpr> = alpha_val.iter().map(|&a| LinExpr::constant(a)).collect();
        let ctrl = vec![LinExpr::zero(); 3];
        add_network_block(&mut prog, &net, &path, &ctx, 0, &ctrl, &alpha, false).unwrap();
        let sens = sensitivity_matrices(&net, &path, &ctx.gamma, &alpha_val).unwrap();
        let sigma = &ctx.factor * ctx.factor.transpose();
        for bus in [1usize, 2] {
            let b = sens.b_u.row(bus).transpose();
            let expected = ctx.levels.voltage * (b.transpose() * &sigma * &b)[(0, 0)].sqrt();
            let id = net.buses()[bus].id;
            let cone = prog.cones().iter().find(|c| c.label == format!("v_max[{id}]")).unwrap();
            let got = cone.v.iter().map(|e| e.eval(&[]).powi(2)).sum::<f64>().sqrt();
            assert!((got - expected).abs() < 1e-12, "bus {bus}: {got} vs {expected}");
        }
    }

    #[test]
    fn zero_uncertainty_block_is_linear_and_reproduces_power_flow() {
        let net = three_bus();
        let path = build_path_matrix(&net);
        let model = ForecastErrorModel::new(vec![], DMatrix::zeros(0, 0)).unwrap();
        let ctx = UncertaintyContext::new(&net, &model, &EpsilonConfig::default()).unwrap();
        let mut prog = ConeProgram::new();
        let zeros = vec![LinExpr::zero(); 3];
        let vars = add_network_block(&mut prog, &net, &path, &ctx, 0, &zeros, &zeros, false).unwrap();
        // only the rating cones remain
        assert_eq!(prog.cones().len(), 2);
        prog.set_objective(vars.k_p.iter().fold(LinExpr::zero(), |a, v| a + *v));
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert!(sol.is_optimal());
        let flow = crate::grid::lindistflow_solve(&net, &net.base_injections(0).unwrap(), &[0.0; 3]).unwrap();
        for l in 0..2 {
            assert!((sol.value(vars.p_flow[l]) - flow.p_flow[l]).abs() < 1e-7);
            assert!((sol.value(vars.q_flow[l]) - flow.q_flow[l]).abs() < 1e-7);
        }
        for b in 0..3 {
            assert!((sol.eval(&vars.u[b]) - flow.u[b]).abs() < 1e-7);
        }
    }
}
