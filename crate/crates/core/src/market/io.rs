use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{Bid, BidKind, MarketError, ZonePartition};
use crate::flexreq::RequestEntry;

fn parse_err(path: &Path, message: impl ToString) -> MarketError {
    MarketError::Parse { path: path.display().to_string(), message: message.to_string() }
}

fn io_err(path: &Path, source: std::io::Error) -> MarketError {
    MarketError::Io { path: path.display().to_string(), source }
}

/// Bid book with columns `id, bus, period, direction, kind, quantity_mw,
/// price_eur_per_mw`.
pub fn read_bids_csv(path: &Path) -> Result<Vec<Bid>, MarketError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| parse_err(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| parse_err(path, e))).collect()
}

pub fn write_bids_csv(bids: &[Bid], path: &Path) -> Result<(), MarketError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    for b in bids {
        writer.serialize(b).map_err(|e| parse_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

/// Reads a request book written by request creation. Ids are assigned in
/// file order starting at `first_id`.
pub fn read_request_book_json(path: &Path, first_id: u64) -> Result<Vec<Bid>, MarketError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let entries: Vec<RequestEntry> = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    Ok(request_bids(&entries, first_id))
}

/// Turns request entries into request bids with ids from `first_id` on.
pub fn request_bids(entries: &[RequestEntry], first_id: u64) -> Vec<Bid> {
    entries
        .iter()
        .zip(first_id..)
        .map(|(e, id)| Bid {
            id,
            bus: e.bus,
            period: e.period,
            direction: e.direction,
            kind: BidKind::Request,
            quantity_mw: e.quantity_mw,
            price_eur_per_mw: e.price_eur_per_mw,
        })
        .collect()
}

/// Zones as a JSON list of bus-id arrays.
pub fn read_zones_json(path: &Path) -> Result<ZonePartition, MarketError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let zones: Vec<Vec<u32>> = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    Ok(ZonePartition::canonical(zones))
}

pub fn write_zones_json(zones: &ZonePartition, path: &Path) -> Result<(), MarketError> {
    write_json(zones, path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), MarketError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}
