use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::Serialize;

use super::SocpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `Σ cᵢ xᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self { terms: vec![(var, coef)], constant: 0.0 }
    }

    pub fn push(&mut self, var: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    pub fn offset(&self) -> f64 {
        self.constant
    }

    /// Terms with duplicates merged and zero coefficients dropped, ordered by
    /// variable.
    pub fn merged_terms(&self) -> Vec<(VarId, f64)> {
        let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v).or_default() += c;
        }
        acc.into_iter().filter(|&(_, c)| c != 0.0).collect()
    }

    /// Same expression with duplicate variables merged.
    pub fn simplified(&self) -> LinExpr {
        LinExpr { terms: self.merged_terms(), constant: self.constant }
    }

    /// True when the expression is `0` for every assignment.
    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.merged_terms().is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * x[v.0])
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|(v, _)| v.0).max()
    }

    fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        for (v, c) in self.merged_terms() {
            let _ = write!(out, "{c:+e}*{} ", names[v.0]);
        }
        let _ = write!(out, "{:+e}", self.constant);
        out
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign<LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl SubAssign<LinExpr> for LinExpr {
    fn sub_assign(&mut self, rhs: LinExpr) {
        *self += -rhs;
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs.into();
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= rhs.into();
        self
    }
}

impl<T: Into<LinExpr>> Add<T> for VarId {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for VarId {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Mul<f64> for VarId {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr::term(self, k)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Neg for VarId {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        LinExpr::term(self, -1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: LinExpr,
}

/// `‖v‖₂ ≤ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCone {
    pub label: String,
    pub t: LinExpr,
    pub v: Vec<LinExpr>,
}

/// Linear objective (minimized) over equalities `expr = 0`, inequalities
/// `expr ≥ 0` and second-order cones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConeProgram {
    names: Vec<String>,
    objective: LinExpr,
    equalities: Vec<Constraint>,
    inequalities: Vec<Constraint>,
    cones: Vec<SecondOrderCone>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Largest `|expr|` over equalities.
    pub primal_eq: f64,
    /// Largest `‖v‖ - t` over cones and `-expr` over inequalities; negative
    /// when every such constraint holds strictly.
    pub cone: f64,
    pub objective: f64,
    /// Label of the constraint attaining `cone`.
    pub worst_cone: Option<String>,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.names.push(name.into());
        VarId(self.names.len() - 1)
    }

    pub fn add_nonneg_var(&mut self, name: impl Into<String>) -> VarId {
        let v = self.add_var(name);
        self.add_nonneg(v);
        v
    }

    pub fn add_nonneg(&mut self, var: VarId) {
        let label = format!("nonneg:{}", self.names[var.0]);
        self.add_ge(label, var);
    }

    pub fn set_objective(&mut self, objective: impl Into<LinExpr>) {
        self.objective = objective.into();
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// `lhs = rhs`.
    pub fn add_eq(&mut self, label: impl Into<String>, lhs: impl Into<LinExpr>, rhs: f64) {
        self.equalities.push(Constraint { label: label.into(), expr: lhs.into() - rhs });
    }

    /// `expr ≥ 0`.
    pub fn add_ge(&mut self, label: impl Into<String>, expr: impl Into<LinExpr>) {
        self.inequalities.push(Constraint { label: label.into(), expr: expr.into() });
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, label: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.add_ge(label, rhs.into() - lhs.into());
    }

    /// `‖v‖ ≤ t`. Identically zero entries of `v` are dropped; with nothing
    /// left the cone degenerates to `t ≥ 0`.
    pub fn add_soc(&mut self, label: impl Into<String>, t: impl Into<LinExpr>, v: Vec<LinExpr>) {
        let v: Vec<LinExpr> = v.into_iter().filter(|e| !e.is_zero()).collect();
        if v.is_empty() {
            self.add_ge(label, t);
        } else {
            self.cones.push(SecondOrderCone { label: label.into(), t: t.into(), v });
        }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.names[var.0]
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.inequalities
    }

    pub fn cones(&self) -> &[SecondOrderCone] {
        &self.cones
    }

    /// Every expression references only declared variables.
    pub fn validate(&self) -> Result<(), SocpError> {
        let n = self.names.len();
        let exprs = std::iter::once(&self.objective)
            .chain(self.equalities.iter().map(|c| &c.expr))
            .chain(self.inequalities.iter().map(|c| &c.expr))
            .chain(self.cones.iter().flat_map(|c| std::iter::once(&c.t).chain(c.v.iter())));
        for e in exprs {
            if let Some(m) = e.max_var() {
                if m >= n {
                    return Err(SocpError::UndeclaredVariable(m));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<FeasibilityReport, SocpError> {
        if point.len() != self.names.len() {
            return Err(SocpError::Assignment { expected: self.names.len(), got: point.len() });
        }
        self.validate()?;
        let primal_eq = self.equalities.iter().map(|c| c.expr.eval(point).abs()).fold(0.0, f64::max);
        let mut worst: Option<(f64, &str)> = None;
        let mut candidates: Vec<(f64, &str)> = Vec::new();
        for c in &self.inequalities {
            candidates.push((-c.expr.eval(point), &c.label));
        }
        for c in &self.cones {
            let norm = c.v.iter().map(|e| e.eval(point).powi(2)).sum::<f64>().sqrt();
            candidates.push((norm - c.t.eval(point), &c.label));
        }
        for (value, label) in candidates {
            if worst.is_none_or(|(w, _)| value > w) {
                worst = Some((value, label));
            }
        }
        Ok(FeasibilityReport {
            primal_eq,
            cone: worst.map_or(0.0, |(w, _)| w),
            objective: self.objective.eval(point),
            worst_cone: worst.map(|(_, l)| l.to_owned()),
        })
    }

    /// Plain-text canonical listing, stable across runs, for diffing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variables {}", self.names.len());
        for (i, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "  x{i} {name}");
        }
        let _ = writeln!(out, "minimize {}", self.objective.render(&self.names));
        for c in &self.equalities {
            let _ = writeln!(out, "eq {}: {} = 0", c.label, c.expr.render(&self.names));
        }
        for c in &self.inequalities {
            let _ = writeln!(out, "ge {}: {} >= 0", c.label, c.expr.render(&self.names));
        }
        for c in &self.cones {
            let v: Vec<String> = c.v.iter().map(|e| e.render(&self.names)).collect();
            let _ = writeln!(out, "soc {}: ||[{}]|| <= {}", c.label, v.join("; "), c.t.render(&self.names));
        }
        out
    }
}
