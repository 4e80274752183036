use std::fs::{self, File};
use std::path::Path;

use super::HarnessError;
use crate::cascade::CascadeRealization;
use crate::dimension::PartitionRow;
use crate::frostman::EnergyRow;

/// Deepest level written by [`write_realization`]: `2^17 − 1` rows.
pub const MAX_DUMP_LEVEL: u32 = 16;

fn writer(path: &Path) -> Result<csv::Writer<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    csv::Writer::from_path(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn io(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// `level,index,mass` for every cell of levels `0..=depth`.
pub fn write_realization(path: &Path, real: &CascadeRealization<f64>, depth: u32) -> Result<usize, HarnessError> {
    if depth > MAX_DUMP_LEVEL {
        return Err(HarnessError::Config(format!("dumps are limited to level {MAX_DUMP_LEVEL}")));
    }
    let mut w = writer(path)?;
    w.write_record(["level", "index", "mass"]).map_err(io)?;
    let mut rows = 0;
    for n in 0..=depth {
        for c in real.cells(n)? {
            w.write_record([n.to_string(), c.index.index.to_string(), num(c.mass)]).map_err(io)?;
            rows += 1;
        }
    }
    w.flush().map_err(io)?;
    Ok(rows)
}

pub fn write_partition_rows(path: &Path, rows: &[PartitionRow<f64>]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["n", "s", "log2_Z", "realization_id"]).map_err(io)?;
    for r in rows {
        w.write_record([r.n.to_string(), num(r.s), num(r.log2_z), r.realization_id.to_string()]).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_energy_rows(path: &Path, rows: &[EnergyRow<f64>]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["n", "s", "mean_energy", "stderr", "replicates"]).map_err(io)?;
    for r in rows {
        w.write_record([r.n.to_string(), num(r.s), num(r.mean_energy), num(r.stderr), r.replicates.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(io)
}
