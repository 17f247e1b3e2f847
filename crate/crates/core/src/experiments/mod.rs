//! Batch studies: rotation versus trap spacing, force-rendering
//! consistency, and scripted delivery trials. Tables are written as CSV
//! with a header row; summaries as pretty JSON.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::session::{load_scenario, Scenario};
use crate::{Error, Result};

pub mod consistency;
pub mod delivery;
pub mod rotation;

/// The bundled delivery scenario document.
pub const DELIVERY_SCENARIO_JSON: &str = include_str!("../../scenarios/delivery.json");

pub fn default_delivery_scenario() -> Scenario {
    load_scenario(DELIVERY_SCENARIO_JSON, None).expect("bundled scenario is valid")
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(f)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}
