//! Zero-mean Gaussian forecast errors: covariance estimation, sampling,
//! sensitivity of flows and voltages to the errors under an affine
//! participation policy, and the deterministic uncertainty margins that
//! replace linear chance constraints.
//!
//! A positive error `ξ_s` lowers the injection at the bus of source `s`.

mod io;
mod normal;

pub use io::{read_model_json, read_scenarios_csv, write_model_json, write_scenarios_csv, ModelDoc};
pub use normal::{gaussian_quantile, normal_cdf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{PathMatrix, RadialNetwork};

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),
    #[error("violation level {name} = {value} is outside (0, 0.5)")]
    Epsilon { name: &'static str, value: f64 },
    #[error("beta = {0} is outside (0, 1)")]
    Beta(f64),
    #[error("covariance must be a symmetric {expected}x{expected} matrix")]
    Covariance { expected: usize },
    #[error("covariance factorization failed after regularization")]
    Factorization,
    #[error("need at least two scenarios, got {0}")]
    TooFewScenarios(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("source {source_id} sits on unknown bus {bus}")]
    UnknownBus { source_id: String, bus: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub id: String,
    pub bus: u32,
}

/// Gaussian forecast errors with zero mean and covariance `sigma`
/// (per-unit²), one source per uncertain injection.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastErrorModel {
    pub sources: Vec<Source>,
    pub sigma: DMatrix<f64>,
}

impl ForecastErrorModel {
    pub fn new(sources: Vec<Source>, sigma: DMatrix<f64>) -> Result<Self, UncertaintyError> {
        let n = sources.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(UncertaintyError::Covariance { expected: n });
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-9 * scale {
                    return Err(UncertaintyError::Covariance { expected: n });
                }
            }
        }
        Ok(Self { sources, sigma })
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Same sources with a different covariance.
    pub fn with_sigma(&self, sigma: DMatrix<f64>) -> Result<Self, UncertaintyError> {
        Self::new(self.sources.clone(), sigma)
    }

    /// Bus-by-source 0/1 matrix Γ.
    pub fn incidence(&self, network: &RadialNetwork) -> Result<DMatrix<f64>, UncertaintyError> {
        let mut gamma = DMatrix::zeros(network.n_buses(), self.n_sources());
        for (s, src) in self.sources.iter().enumerate() {
            let bus = network
                .bus_index(src.bus)
                .ok_or_else(|| UncertaintyError::UnknownBus { source_id: src.id.clone(), bus: src.bus })?;
            gamma[(bus, s)] = 1.0;
        }
        Ok(gamma)
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ` (up to regularization).
    pub fn factor(&self) -> Result<DMatrix<f64>, UncertaintyError> {
        covariance_factor(&self.sigma)
    }

    /// Standard deviation of the total error `1ᵀξ`.
    pub fn total_std(&self) -> f64 {
        self.sigma.sum().max(0.0).sqrt()
    }
}

/// Cholesky factor of a PSD covariance. When the strict factorization fails
/// a ridge `δI` with `δ = 1e-10 · trace(Σ) / |U|` is added once; an all-zero
/// covariance factors to the zero matrix.
pub fn covariance_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, UncertaintyError> {
    let n = sigma.nrows();
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.l());
    }
    let trace = sigma.trace();
    if sigma.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    if !(trace > 0.0) {
        return Err(UncertaintyError::Factorization);
    }
    let delta = 1e-10 * trace / n as f64;
    let ridged = sigma + DMatrix::identity(n, n) * delta;
    ridged.cholesky().map(|c| c.l()).ok_or(UncertaintyError::Factorization)
}

/// Per-constraint violation probabilities and the split between the active
/// and reactive parts of the line-rating constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonConfig {
    pub s: f64,
    pub v: f64,
    pub r: f64,
    pub a: f64,
    pub c: f64,
    pub ns: f64,
    pub beta: f64,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self::uniform(0.05)
    }
}

impl EpsilonConfig {
    pub fn uniform(eps: f64) -> Self {
        Self { s: eps, v: eps, r: eps, a: eps, c: eps, ns: eps, beta: 0.5 }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        for (name, value) in
            [("s", self.s), ("v", self.v), ("r", self.r), ("a", self.a), ("c", self.c), ("ns", self.ns)]
        {
            if !(value > 0.0 && value < 0.5) {
                return Err(UncertaintyError::Epsilon { name, value });
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(UncertaintyError::Beta(self.beta));
        }
        Ok(())
    }

    /// Quantile multipliers for every margin family.
    pub fn levels(&self) -> Result<MarginLevels, UncertaintyError> {
        self.validate()?;
        let q = |eps: f64, scale: f64| gaussian_quantile(1.0 - eps / scale);
        let (p_share, q_share) = (self.beta * self.s, (1.0 - self.beta) * self.s);
        Ok(MarginLevels {
            flow_p: q(p_share, 1.25)?,
            flow_q: q(q_share, 1.25)?,
            aux_p: q(p_share, 2.5)?,
            aux_q: q(q_share, 2.5)?,
            voltage: q(self.v, 1.0)?,
            request: q(self.r, 1.0)?,
            activation: q(self.a, 1.0)?,
            curtailment: q(self.c, 1.0)?,
            shedding: q(self.ns, 1.0)?,
        })
    }
}

/// `Φ⁻¹(1 - ε/scale)` for each constraint family.
///
/// The reactive flow and auxiliary levels use `(1 - β)·ε_S`, the share left
/// over by the active part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginLevels {
    pub flow_p: f64,
    pub flow_q: f64,
    pub aux_p: f64,
    pub aux_q: f64,
    pub voltage: f64,
    pub request: f64,
    pub activation: f64,
    pub curtailment: f64,
    pub shedding: f64,
}

/// Error realizations (per-unit), one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub source_ids: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn count(&self) -> usize {
        self.draws.len()
    }

    pub fn n_sources(&self) -> usize {
        self.source_ids.len()
    }
}

/// Zero-mean sample covariance `(1/N) Σ ξ ξᵀ`, symmetrized.
pub fn estimate_covariance(scenarios: &ScenarioSet) -> Result<DMatrix<f64>, UncertaintyError> {
    let n = scenarios.count();
    if n < 2 {
        return Err(UncertaintyError::TooFewScenarios(n));
    }
    let u = scenarios.n_sources();
    let mut sigma = DMatrix::zeros(u, u);
    for draw in &scenarios.draws {
        if draw.len() != u {
            return Err(UncertaintyError::Dimension { expected: u, got: draw.len() });
        }
        let x = DVector::from_column_slice(draw);
        sigma += &x * x.transpose();
    }
    sigma /= n as f64;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Draws `count` zero-mean Gaussian errors `L z` with `z ~ N(0, I)` from a
/// ChaCha8 stream seeded by `seed`.
pub fn sample_scenarios(
    model: &ForecastErrorModel,
    count: usize,
    seed: u64,
) -> Result<ScenarioSet, UncertaintyError> {
    let l = model.factor()?;
    let u = model.n_sources();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(u);
    let draws = (0..count)
        .map(|_| {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            (&l * &z).iter().copied().collect()
        })
        .collect();
    Ok(ScenarioSet { source_ids: model.sources.iter().map(|s| s.id.clone()).collect(), draws, seed })
}

/// `Φ⁻¹(1 - ε/scale) · sqrt(bᵀΣb)`.
pub fn uncertainty_margin(
    b: &[f64],
    sigma: &DMatrix<f64>,
    epsilon: f64,
    scale: f64,
) -> Result<f64, UncertaintyError> {
    if b.len() != sigma.nrows() {
        return Err(UncertaintyError::Dimension { expected: sigma.nrows(), got: b.len() });
    }
    let z = gaussian_quantile(1.0 - epsilon / scale)?;
    let b = DVector::from_column_slice(b);
    let var = (b.transpose() * sigma * &b)[(0, 0)].max(0.0);
    Ok(z * var.sqrt())
}

/// Linear response of requests, flows and squared voltages to the source
/// errors for fixed participation factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBundle {
    /// Participation factor per bus; the request at bus `n` moves by
    /// `alpha[n] · 1ᵀξ`.
    pub b_f: Vec<f64>,
    /// Lines × sources.
    pub b_p: DMatrix<f64>,
    pub b_q: DMatrix<f64>,
    /// Buses × sources.
    pub b_u: DMatrix<f64>,
}

pub fn path_matrix_dense(path: &PathMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(path.n_lines(), path.n_buses(), |l, n| path.get(l, n) as u8 as f64)
}

/// `b_p = A(Γ - α1ᵀ)`, `b_q = A·diag(K)·(Γ - α1ᵀ)` and
/// `b_u[n] = -2 Σ_{l ∈ path(n)} (R_l b_p[l] + X_l b_q[l])`.
pub fn sensitivity_matrices(
    network: &RadialNetwork,
    path: &PathMatrix,
    gamma: &DMatrix<f64>,
    alpha: &[f64],
) -> Result<SensitivityBundle, UncertaintyError> {
    let (n, u) = (network.n_buses(), gamma.ncols());
    if alpha.len() != n {
        return Err(UncertaintyError::Dimension { expected: n, got: alpha.len() });
    }
    if gamma.nrows() != n {
        return Err(UncertaintyError::Dimension { expected: n, got: gamma.nrows() });
    }
    if path.n_buses() != n || path.n_lines() != network.n_lines() {
        return Err(UncertaintyError::Dimension { expected: n, got: path.n_buses() });
    }
    let a = path_matrix_dense(path);
    let deviation = DMatrix::from_fn(n, u, |i, s| gamma[(i, s)] - alpha[i]);
    let k_scaled = DMatrix::from_fn(n, u, |i, s| network.k()[i] * deviation[(i, s)]);
    let b_p = &a * deviation;
    let b_q = &a * k_scaled;

    let mut b_u = DMatrix::zeros(n, u);
    for &bus in network.order() {
        if let Some(l) = network.feeder_line(bus) {
            let line = &network.lines()[l];
            let parent = network.line_parent(l);
            for s in 0..u {
                b_u[(bus, s)] = b_u[(parent, s)] - 2.0 * (line.r * b_p[(l, s)] + line.x * b_q[(l, s)]);
            }
        }
    }
    Ok(SensitivityBundle { b_f: alpha.to_vec(), b_p, b_q, b_u })
}
