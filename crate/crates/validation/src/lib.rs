//! Helpers for the acceptance run: dataset fixtures and a PASS/FAIL board.
//!
//! Datasets are read from `$GTA_DATA_DIR/<name>` when that variable is set,
//! otherwise generated synthetically and round-tripped through the neutral
//! on-disk format.

use std::path::PathBuf;
use std::time::Instant;

use gta_core::synthetic::{generate, DatasetProfile};
use gta_core::{load_dataset, save_dataset, Graph, Result};

pub const DATA_DIR_VAR: &str = "GTA_DATA_DIR";
pub const FIXTURE_SEED: u64 = 0;

pub fn fixture(name: &str) -> Result<Graph> {
    if let Some(root) = std::env::var_os(DATA_DIR_VAR) {
        return load_dataset(&PathBuf::from(root).join(name));
    }
    let profile = DatasetProfile::by_name(name)
        .unwrap_or_else(|| panic!("no synthetic profile named {name}"));
    let graph = generate(&profile, FIXTURE_SEED)?;
    let dir = tempfile::tempdir().map_err(|source| gta_core::Error::Io {
        path: std::env::temp_dir(),
        source,
    })?;
    save_dataset(&graph, name, dir.path())?;
    load_dataset(dir.path())
}

#[derive(Debug, Default)]
pub struct Board {
    results: Vec<(String, bool)>,
    start: Option<Instant>,
}

impl Board {
    pub fn new() -> Self {
        Self {
            results: Vec::new(),
            start: Some(Instant::now()),
        }
    }

    /// Prints one line for the criterion and records the verdict.
    pub fn check(&mut self, name: &str, pass: bool, detail: impl std::fmt::Display) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass));
    }

    pub fn failed(&self) -> Vec<&str> {
        self.results
            .iter()
            .filter(|r| !r.1)
            .map(|r| r.0.as_str())
            .collect()
    }

    pub fn summary(&self) -> String {
        let secs = self.start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        format!(
            "{} of {} criteria passed in {secs:.0}s",
            self.results.len() - self.failed().len(),
            self.results.len()
        )
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}
