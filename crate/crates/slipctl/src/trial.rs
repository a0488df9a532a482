//! Per-trial logs: one record per control tick plus a sidecar metadata
//! header. Files are JSON-lines with bit-exact round trips.

use crate::basis::ReferenceProfile;
use crate::error::{Error, Result};
use crate::sim::ObjectParams;
use serde::{Deserialize, Serialize};
use serde_big_array::BigArray;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// One sensed 48-channel shear frame (4x4 taxel grid x 3 axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    #[serde(with = "BigArray")]
    pub shear: [f64; 48],
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    /// Commanded speed, m/s.
    pub cmd: f64,
    /// Realized end-effector speed after the tick, m/s.
    pub speed: f64,
    /// Realized acceleration over the tick, m/s^2.
    pub accel: f64,
    /// Raw (unfiltered) tactile channels.
    #[serde(with = "BigArray")]
    pub tactile: [f64; 48],
    /// Object rotation about the grip axis, degrees.
    pub theta: f64,
    pub slip: u8,
    /// Commanded 6-D task-space velocity: path direction x speed, zeros
    /// for the remaining components.
    pub action6: [f64; 6],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_slip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rov: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub et_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub seed: u64,
    pub controller: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_basis: Option<usize>,
    pub v_max: f64,
    pub dt: f64,
    pub warmup_ticks: usize,
    pub params: ObjectParams,
    pub profile: ReferenceProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub meta: TrialMeta,
    pub records: Vec<TickRecord>,
}

impl TrialLog {
    /// True when the drop latch fired at any tick (the latch freezes
    /// `theta` at or beyond the failure angle).
    pub fn dropped(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.theta.abs() >= self.meta.params.failure_angle)
    }

    /// Write `<stem>.jsonl` (one record per tick) and `<stem>.meta.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join(format!("{stem}.meta.json"));
        let meta_json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::json(&meta_path, e))?;
        std::fs::write(&meta_path, meta_json).map_err(|e| Error::io(&meta_path, e))?;

        let data_path = dir.join(format!("{stem}.jsonl"));
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.records {
            let line = serde_json::to_string(rec).map_err(|e| Error::json(&data_path, e))?;
            writeln!(w, "{line}").map_err(|e| Error::io(&data_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&data_path, e))?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<TrialLog> {
        let meta_path = dir.join(format!("{stem}.meta.json"));
        let meta_json =
            std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: TrialMeta =
            serde_json::from_str(&meta_json).map_err(|e| Error::json(&meta_path, e))?;

        let data_path = dir.join(format!("{stem}.jsonl"));
        let file = File::open(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&data_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::json(&data_path, e))?);
        }
        Ok(TrialLog { meta, records })
    }

    /// Stems of all trials in a directory, sorted.
    pub fn list_stems(dir: &Path) -> Result<Vec<String>> {
        let mut stems = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path: PathBuf = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
        }
        stems.sort();
        Ok(stems)
    }
}
