use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bus, GridError, Line, Network, Period};

/// On-disk network document. Injections are in MW; everything else is
/// per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub base_mva: f64,
    pub base_kv: f64,
    #[serde(default = "default_u0")]
    pub slack_u0: f64,
    pub buses: Vec<BusDoc>,
    pub lines: Vec<Line>,
    pub periods: Vec<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDoc {
    pub id: u32,
    pub v_min: f64,
    pub v_max: f64,
    pub cos_phi: f64,
    #[serde(default)]
    pub is_slack: bool,
    pub p_inj: Vec<f64>,
}

fn default_u0() -> f64 {
    1.0
}

impl NetworkDoc {
    pub fn into_network(self) -> Network {
        let base = self.base_mva;
        Network {
            buses: self
                .buses
                .into_iter()
                .map(|b| Bus {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    p_inj: b.p_inj.iter().map(|p| p / base).collect(),
                    cos_phi: b.cos_phi,
                    is_slack: b.is_slack,
                })
                .collect(),
            lines: self.lines,
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            slack_u0: self.slack_u0,
            periods: self.periods,
        }
    }

    pub fn from_network(network: &Network) -> Self {
        let base = network.base_mva;
        Self {
            base_mva: network.base_mva,
            base_kv: network.base_kv,
            slack_u0: network.slack_u0,
            buses: network
                .buses
                .iter()
                .map(|b| BusDoc {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    cos_phi: b.cos_phi,
                    is_slack: b.is_slack,
                    p_inj: b.p_inj.iter().map(|p| p * base).collect(),
                })
                .collect(),
            lines: network.lines.clone(),
            periods: network.periods.clone(),
        }
    }
}

fn read(path: &Path) -> Result<String, GridError> {
    fs::read_to_string(path).map_err(|source| GridError::Io { path: path.display().to_string(), source })
}

pub fn read_network_json(path: &Path) -> Result<Network, GridError> {
    let text = read(path)?;
    let doc: NetworkDoc = serde_json::from_str(&text)
        .map_err(|e| GridError::Parse { path: path.display().to_string(), message: e.to_string() })?;
    Ok(doc.into_network())
}

pub fn write_network_json(network: &Network, path: &Path) -> Result<(), GridError> {
    let text = serde_json::to_string_pretty(&NetworkDoc::from_network(network)).expect("serializable");
    fs::write(path, text + "\n").map_err(|source| GridError::Io { path: path.display().to_string(), source })
}

/// Reads a `buses.csv` / `lines.csv` pair.
///
/// The bus file has columns `id, v_min, v_max, cos_phi, is_slack` followed
/// by either a single `p_inj` column or `p_inj_0, p_inj_1, ...` (MW). Every
/// period lasts one hour.
pub fn read_network_csv(
    buses: &Path,
    lines: &Path,
    base_mva: f64,
    base_kv: f64,
    slack_u0: f64,
) -> Result<Network, GridError> {
    let parse_err = |path: &Path, message: String| GridError::Parse { path: path.display().to_string(), message };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(buses).map_err(|e| {
        parse_err(buses, e.to_string())
    })?;
    let headers = reader.headers().map_err(|e| parse_err(buses, e.to_string()))?.clone();
    let column: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut inj_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| match h {
            "p_inj" => Some((0, i)),
            _ => h.strip_prefix("p_inj_").and_then(|k| k.parse().ok()).map(|k| (k, i)),
        })
        .collect();
    inj_cols.sort_unstable();
    if inj_cols.is_empty() {
        return Err(parse_err(buses, "missing p_inj column".into()));
    }
    let need = |name: &str| column.get(name).copied().ok_or_else(|| parse_err(buses, format!("missing column {name}")));
    let (c_id, c_vmin, c_vmax, c_cos) = (need("id")?, need("v_min")?, need("v_max")?, need("cos_phi")?);
    let c_slack = column.get("is_slack").copied();

    let mut bus_docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(buses, e.to_string()))?;
        let num = |c: usize| -> Result<f64, GridError> {
            record[c].parse::<f64>().map_err(|e| parse_err(buses, format!("row {}: {e}", row + 1)))
        };
        let is_slack = match c_slack.map(|c| record[c].to_ascii_lowercase()) {
            Some(v) => matches!(v.as_str(), "1" | "true" | "yes"),
            None => false,
        };
        bus_docs.push(BusDoc {
            id: record[c_id].parse().map_err(|e| parse_err(buses, format!("row {}: {e}", row + 1)))?,
            v_min: num(c_vmin)?,
            v_max: num(c_vmax)?,
            cos_phi: num(c_cos)?,
            is_slack,
            p_inj: inj_cols.iter().map(|&(_, c)| num(c)).collect::<Result<_, _>>()?,
        });
    }

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(lines).map_err(|e| {
        parse_err(lines, e.to_string())
    })?;
    let mut line_list = Vec::new();
    for record in reader.deserialize::<Line>() {
        line_list.push(record.map_err(|e| parse_err(lines, e.to_string()))?);
    }

    let periods = (0..inj_cols.len() as u32).map(|id| Period { id, dt_hours: 1.0 }).collect();
    Ok(NetworkDoc { base_mva, base_kv, slack_u0, buses: bus_docs, lines: line_list, periods }.into_network())
}
