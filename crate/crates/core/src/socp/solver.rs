use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use serde::Serialize;

use super::{ConeProgram, LinExpr, SocpError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Target for primal residual, cone violation and relative duality gap.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub primal_eq: f64,
    pub cone: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Primal point; only meaningful when `status` is optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, var: super::VarId) -> f64 {
        self.values[var.index()]
    }

    pub fn eval(&self, expr: &LinExpr) -> f64 {
        expr.eval(&self.values)
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends `sign * (a·x) + s = -sign * c` for the expression `a·x + c`.
    fn push(&mut self, expr: &LinExpr, sign: f64) {
        let row = self.b.len();
        for (var, coef) in expr.merged_terms() {
            self.i.push(row);
            self.j.push(var.index());
            self.v.push(sign * coef);
        }
        self.b.push(-sign * expr.offset());
    }
}

/// Solves `program` and independently re-measures the returned point.
///
/// An optimal status is only reported when the measured residuals meet
/// `settings.tol` relative to `1 + max(|x|, |data|)` and the relative
/// duality gap meets `settings.tol`; a point the backend calls "almost
/// solved" is accepted under the same test. A run that fails the test is
/// repeated with different backend regularization before giving up.
pub fn solve(program: &ConeProgram, settings: &SolverSettings) -> Result<Solution, SocpError> {
    program.validate()?;
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(SocpError::Settings(format!("tol {} max_iter {}", settings.tol, settings.max_iter)));
    }
    let n = program.n_vars();
    let mut q = vec![0.0; n];
    for (var, coef) in program.objective().merged_terms() {
        q[var.index()] = coef;
    }

    let mut rows = Rows { i: Vec::new(), j: Vec::new(), v: Vec::new(), b: Vec::new() };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    // equality: a·x + c = 0  ->  a·x + s = -c, s = 0
    for c in program.equalities() {
        rows.push(&c.expr, 1.0);
    }
    if !program.equalities().is_empty() {
        cones.push(ZeroConeT(program.equalities().len()));
    }
    // inequality and cone entries: s = a·x + c  ->  -a·x + s = c
    for c in program.inequalities() {
        rows.push(&c.expr, -1.0);
    }
    if !program.inequalities().is_empty() {
        cones.push(NonnegativeConeT(program.inequalities().len()));
    }
    for c in program.cones() {
        rows.push(&c.t, -1.0);
        for e in &c.v {
            rows.push(e, -1.0);
        }
        cones.push(SecondOrderConeT(c.v.len() + 1));
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
    let p = CscMatrix::zeros((n, n));
    let b_max = rows.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut best = None;
    for variant in 0..BACKEND_VARIANTS {
        let attempt = run_backend(program, &p, &q, &a, &rows.b, &cones, settings, variant, b_max)?;
        let done = attempt.status != SolveStatus::NumericalFailure;
        best = Some(attempt);
        if done {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// Number of backend configurations tried before giving up.
const BACKEND_VARIANTS: usize = 3;

fn backend_settings(settings: &SolverSettings, variant: usize) -> DefaultSettings<f64> {
    // The backend measures convergence on its equilibrated problem; aim a
    // decade below the target so the re-measured point usually meets it.
    let inner = (settings.tol * 0.1).max(1e-12);
    let base = DefaultSettings {
        max_iter: settings.max_iter,
        tol_gap_abs: inner,
        tol_gap_rel: inner,
        tol_feas: inner,
        verbose: false,
        ..DefaultSettings::default()
    };
    match variant {
        0 => base,
        // stalled runs: lighter regularization, tighter refinement
        1 => DefaultSettings {
            static_regularization_constant: 1e-10,
            iterative_refinement_reltol: 1e-15,
            iterative_refinement_abstol: 1e-15,
            iterative_refinement_max_iter: 20,
            ..base
        },
        _ => DefaultSettings { equilibrate_enable: false, max_step_fraction: 0.95, ..base },
    }
}

#[allow(clippy::too_many_arguments)]
fn run_backend(
    program: &ConeProgram,
    p: &CscMatrix<f64>,
    q: &[f64],
    a: &CscMatrix<f64>,
    b: &[f64],
    cones: &[SupportedConeT<f64>],
    settings: &SolverSettings,
    variant: usize,
    b_max: f64,
) -> Result<Solution, SocpError> {
    let mut solver = DefaultSolver::new(p, q, a, b, cones, backend_settings(settings, variant))
        .map_err(|e| SocpError::Backend(e.to_string()))?;
    solver.solve();
    let raw = &solver.solution;

    let offset = program.objective().offset();
    let values = raw.x.clone();
    let report = program.evaluate(&values)?;
    let objective = report.objective;
    let dual_objective = raw.obj_val_dual + offset;
    let gap = (objective - dual_objective).abs() / 1f64.max(objective.abs().min(dual_objective.abs()));
    let residuals = Residuals { primal_eq: report.primal_eq, cone: report.cone.max(0.0), duality_gap: gap };
    let scale = 1.0 + values.iter().fold(b_max, |m, v| m.max(v.abs()));
    let accurate = residuals.primal_eq <= settings.tol * scale
        && residuals.cone <= settings.tol * scale
        && gap <= settings.tol;

    let status = match raw.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved if accurate => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    Ok(Solution { status, values, objective, dual_objective, residuals, iterations: raw.iterations })
}
