use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlexReqError, FlexRequestSet};
use crate::market::Direction;

/// One priced request in the bid-book format the market ingests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEntry {
    pub bus: u32,
    pub period: u32,
    pub direction: Direction,
    pub quantity_mw: f64,
    pub price_eur_per_mw: f64,
    pub alpha: f64,
}

impl FlexRequestSet {
    /// Nonzero requests, up before down within each bus and period.
    pub fn entries(&self) -> Vec<RequestEntry> {
        let mut out = Vec::new();
        for r in &self.requests {
            for (direction, q, price) in
                [(Direction::Up, r.up_mw, self.lambda_up), (Direction::Down, r.down_mw, self.lambda_down)]
            {
                if q > 0.0 {
                    out.push(RequestEntry {
                        bus: r.bus,
                        period: r.period,
                        direction,
                        quantity_mw: q,
                        price_eur_per_mw: price,
                        alpha: r.alpha,
                    });
                }
            }
        }
        out
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FlexReqError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|source| FlexReqError::Io { path: path.display().to_string(), source })
}

pub fn write_request_book_json(set: &FlexRequestSet, path: &Path) -> Result<(), FlexReqError> {
    write_json(&set.entries(), path)
}

/// Full set including nominal activations and per-period solver summaries.
pub fn write_request_set_json(set: &FlexRequestSet, path: &Path) -> Result<(), FlexReqError> {
    write_json(set, path)
}

pub fn read_request_set_json(path: &Path) -> Result<FlexRequestSet, FlexReqError> {
    let text =
        fs::read_to_string(path).map_err(|source| FlexReqError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| FlexReqError::Parse { path: path.display().to_string(), message: e.to_string() })
}
