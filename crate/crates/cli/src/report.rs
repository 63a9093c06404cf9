//! Run reports: `report.json` with every per-seed row, `report.csv` with one
//! line per aggregated table row.

use std::fs;
use std::path::Path;

use gta_core::attack::Termination;
use gta_core::data::{sha256_hex, FileRef};
use gta_core::Summary;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const JSON_FILE: &str = "report.json";
pub const CSV_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    /// `clean`, `natural`, `robust` or an attack name.
    pub setting: String,
    /// Greedy step size, for attacks that use one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub misclassification_pct: f64,
    pub wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flips: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip_list: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub setting: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub misclassification_pct: Summary,
    pub wall_clock_s: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: RunConfig,
    pub rows: Vec<SeedRow>,
    pub table: Vec<TableRow>,
    /// Files written next to the report, paths relative to the output directory.
    pub artifacts: Vec<FileRef>,
}

impl RunReport {
    pub fn new(command: &str, config: RunConfig, rows: Vec<SeedRow>) -> Self {
        let table = aggregate(&rows);
        Self {
            command: command.into(),
            config,
            rows,
            table,
            artifacts: Vec::new(),
        }
    }

    pub fn row(&self, setting: &str, step: Option<usize>) -> Option<&TableRow> {
        self.table
            .iter()
            .find(|r| r.setting == setting && r.step == step)
    }

    /// Records the checksum of a file already written under `out`.
    pub fn add_artifact(&mut self, out: &Path, relative: &str) -> Result<()> {
        let path = out.join(relative);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(FileRef {
            path: relative.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let path = out.join(JSON_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;

        let path = out.join(CSV_FILE);
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let header = [
            "setting",
            "step",
            "seeds",
            "misclassification_mean",
            "misclassification_std",
            "wall_clock_mean",
        ];
        let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for r in &self.table {
            let m = &r.misclassification_pct;
            w.write_record([
                r.setting.clone(),
                r.step.map(|s| s.to_string()).unwrap_or_default(),
                m.count.to_string(),
                format!("{:.4}", m.mean),
                m.std.map(|s| format!("{s:.4}")).unwrap_or_default(),
                format!("{:.4}", r.wall_clock_s.mean),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(())
    }
}

/// One table row per distinct `(setting, step)`, in order of first appearance.
pub fn aggregate(rows: &[SeedRow]) -> Vec<TableRow> {
    let mut keys: Vec<(String, Option<usize>)> = Vec::new();
    for r in rows {
        let k = (r.setting.clone(), r.step);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(setting, step)| {
            let sel: Vec<&SeedRow> = rows
                .iter()
                .filter(|r| r.setting == setting && r.step == step)
                .collect();
            let m: Vec<f64> = sel.iter().map(|r| r.misclassification_pct).collect();
            let t: Vec<f64> = sel.iter().map(|r| r.wall_clock_s).collect();
            TableRow {
                setting,
                step,
                misclassification_pct: Summary::of(&m),
                wall_clock_s: Summary::of(&t),
            }
        })
        .collect()
}
