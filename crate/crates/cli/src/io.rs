//! CSV and JSON readers and writers for datasets, training results and reports.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Version of the on-disk layout written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn check_schema(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA_VERSION {
        bail!(
            "{} has schema_version {found}, this build reads {SCHEMA_VERSION}",
            path.display()
        );
    }
    Ok(())
}

/// One probe in `train.csv`; probe `n` is the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: usize,
    pub vehicle: usize,
    pub x_initial: f64,
    pub x_final: f64,
}

/// One held-out vehicle in `test.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub test_id: usize,
    pub vehicle: usize,
    pub x_initial: f64,
    pub x_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub loss: f64,
    pub projected_gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub probe: usize,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCellRow {
    pub step: usize,
    pub time: f64,
    pub cell: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDensityRow {
    pub cell: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub density: f64,
    /// Godunov cell average over `[x_left, x_right]`.
    pub density_godunov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodunovRow {
    pub snapshot: usize,
    pub time: f64,
    pub cell: usize,
    pub x_center: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub test_id: usize,
    pub vehicle: usize,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Row {
    pub time: f64,
    pub l1: f64,
}
