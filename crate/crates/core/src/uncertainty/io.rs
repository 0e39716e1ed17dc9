use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{EpsilonConfig, ForecastErrorModel, ScenarioSet, Source, UncertaintyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonsDoc {
    pub s: f64,
    pub v: f64,
    pub r: f64,
    pub a: f64,
    pub c: f64,
    pub ns: f64,
}

/// Model file: sources, covariance (per-unit²), violation levels and β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub sources: Vec<Source>,
    pub sigma: Vec<Vec<f64>>,
    pub epsilons: EpsilonsDoc,
    pub beta: f64,
}

impl ModelDoc {
    pub fn new(model: &ForecastErrorModel, eps: &EpsilonConfig) -> Self {
        let n = model.n_sources();
        Self {
            sources: model.sources.clone(),
            sigma: (0..n).map(|i| (0..n).map(|j| model.sigma[(i, j)]).collect()).collect(),
            epsilons: EpsilonsDoc { s: eps.s, v: eps.v, r: eps.r, a: eps.a, c: eps.c, ns: eps.ns },
            beta: eps.beta,
        }
    }

    pub fn into_parts(self) -> Result<(ForecastErrorModel, EpsilonConfig), UncertaintyError> {
        let n = self.sources.len();
        if self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != n) {
            return Err(UncertaintyError::Covariance { expected: n });
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| self.sigma[i][j]);
        let e = self.epsilons;
        let eps = EpsilonConfig { s: e.s, v: e.v, r: e.r, a: e.a, c: e.c, ns: e.ns, beta: self.beta };
        eps.validate()?;
        Ok((ForecastErrorModel::new(self.sources, sigma)?, eps))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> UncertaintyError {
    UncertaintyError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, message: impl ToString) -> UncertaintyError {
    UncertaintyError::Parse { path: path.display().to_string(), message: message.to_string() }
}

pub fn read_model_json(path: &Path) -> Result<(ForecastErrorModel, EpsilonConfig), UncertaintyError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: ModelDoc = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    doc.into_parts()
}

pub fn write_model_json(model: &ForecastErrorModel, eps: &EpsilonConfig, path: &Path) -> Result<(), UncertaintyError> {
    let text = serde_json::to_string_pretty(&ModelDoc::new(model, eps)).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Scenario CSV: header of source ids, one draw per row, values in MW.
pub fn read_scenarios_csv(path: &Path, base_mva: f64, seed: u64) -> Result<ScenarioSet, UncertaintyError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| parse_err(path, e))?;
    let source_ids: Vec<String> =
        reader.headers().map_err(|e| parse_err(path, e))?.iter().map(str::to_owned).collect();
    let mut draws = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e))?;
        let draw = record
            .iter()
            .map(|v| v.parse::<f64>().map(|mw| mw / base_mva))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("row {}: {e}", row + 1)))?;
        if draw.len() != source_ids.len() {
            return Err(UncertaintyError::Dimension { expected: source_ids.len(), got: draw.len() });
        }
        draws.push(draw);
    }
    Ok(ScenarioSet { source_ids, draws, seed })
}

pub fn write_scenarios_csv(set: &ScenarioSet, base_mva: f64, path: &Path) -> Result<(), UncertaintyError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    writer.write_record(&set.source_ids).map_err(|e| parse_err(path, e))?;
    for draw in &set.draws {
        writer
            .write_record(draw.iter().map(|v| (v * base_mva).to_string()))
            .map_err(|e| parse_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}
