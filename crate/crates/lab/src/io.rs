//! CSV tables, JSON documents and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gyroshe_core::kinetics::EnergyProfile;
use serde::Serialize;

use crate::config::RunConfigFile;
use crate::error::LabError;

pub const COEFF_HEADER: [&str; 4] = ["e", "method", "a", "stderr"];
pub const PROFILE_HEADER: [&str; 4] = ["time", "e_center", "density", "stderr"];
pub const SHE_HEADER: [&str; 3] = ["time", "e_center", "density"];
pub const CORRELATION_HEADER: [&str; 6] = ["tau", "x1", "x2", "target", "estimate", "stderr"];
pub const STUDY_HEADER: [&str; 8] = ["epsilon", "time", "l1", "l2", "w1", "l1_stderr", "stderr_budget", "out_of_range"];

/// Writes a CSV file with the given header; `None` cells are left empty.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), LabError>
where
    I: IntoIterator<Item = Vec<Option<String>>>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(x: f64) -> Option<String> {
    Some(format!("{x}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LabError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Profiles of a `time, e_center, density[, stderr]` file, one per distinct time.
pub fn read_profiles(path: &Path) -> Result<Vec<(f64, EnergyProfile)>, LabError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Validation(format!("{}: missing column {name}", path.display())))
    };
    let (ct, ce, cd) = (col("time")?, col("e_center")?, col("density")?);
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, LabError> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| LabError::Validation(format!("{}: {e}", path.display())))
        };
        let (t, e, d) = (parse(ct)?, parse(ce)?, parse(cd)?);
        match groups.last_mut() {
            Some(g) if g.0 == t => {
                g.1.push(e);
                g.2.push(d);
            }
            _ => groups.push((t, vec![e], vec![d])),
        }
    }
    if groups.is_empty() {
        return Err(LabError::Validation(format!("{}: no rows", path.display())));
    }
    groups
        .into_iter()
        .map(|(t, e, d)| {
            EnergyProfile::from_parts(e, d)
                .map(|p| (t, p))
                .map_err(|err| LabError::Validation(format!("{}: {err}", path.display())))
        })
        .collect()
}

pub fn profile_rows(time: f64, p: &EnergyProfile, stderr: Option<&[f64]>) -> Vec<Vec<Option<String>>> {
    p.e_centers
        .iter()
        .zip(&p.density)
        .enumerate()
        .map(|(k, (&e, &d))| {
            let mut row = vec![num(time), num(e), num(d)];
            if let Some(se) = stderr {
                row.push(num(se[k]));
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub master_seed: Option<u64>,
    pub extra: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Option<String>,
    pub config_hash: Option<String>,
    pub seeds: Seeds,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub status: String,
}

impl Manifest {
    pub fn new(command: &str, config: Option<&RunConfigFile>) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.map(|c| c.canonical()),
            config_hash: config.map(|c| c.hash()),
            seeds: Seeds { master_seed: config.and_then(|c| c.master_seed()), extra: Vec::new() },
            threads: rayon::current_num_threads(),
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
            status: "ok".into(),
        }
    }

    pub fn finish(&mut self, elapsed: Duration, dir: &Path, stem: &str) -> Result<PathBuf, LabError> {
        self.wall_time_seconds = elapsed.as_secs_f64();
        let path = dir.join(format!("{stem}.manifest.json"));
        write_json(&path, self)?;
        Ok(path)
    }
}
