//! Run configuration. A JSON config file mirrors the command-line flags; flags
//! given explicitly override the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gta_core::attack::DEFAULT_REJECTION_CAP;
use gta_core::experiment::Protocol;
use gta_core::{AttackMethod, InnerAttack, SplitSizes, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEEDS: usize = 5;
pub const DEFAULT_FRACTION: f64 = 0.05;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_STEP_GRID: [f64; 3] = [0.01, 0.05, 0.2];

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Dataset directory in the neutral format.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Run seeds 0..K.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Flip budget M as a fraction of the node count.
    #[arg(long)]
    pub budget_frac: Option<f64>,
    /// Greedy step n as a fraction of the node count.
    #[arg(long)]
    pub step_frac: Option<f64>,
    /// Attack method; `eval` and `sweep-n` accept a comma-separated list.
    #[arg(long)]
    pub method: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model directory written by `train` or `robust-train` (holds `seed-<s>/`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Natural model directory used for pseudo-labels.
    #[arg(long)]
    pub natural: Option<PathBuf>,
    /// Outer iterations of robust training.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Outer learning rate of robust training.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Inner attack of robust training: gta, zo-gta or none.
    #[arg(long)]
    pub inner: Option<String>,
    /// Greedy step fractions for `sweep-n`.
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    /// Consecutive rejections before the zeroth-order attack gives up.
    #[arg(long)]
    pub rejection_cap: Option<usize>,
}

/// Serialized form of every option. Reports embed the resolved value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_frac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub natural: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<InnerAttack>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitSizes>,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// File values overridden by explicit flags.
    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => Self::read(path)?,
            None => Self::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if flags.$field.is_some() { cfg.$field = flags.$field.clone(); })*
            };
        }
        take!(
            dataset,
            budget_frac,
            step_frac,
            method,
            out,
            checkpoint,
            natural,
            iterations,
            beta,
            steps,
            rejection_cap
        );
        if let Some(s) = flags.seed {
            cfg.seed = Some(s);
            cfg.seeds = None;
        }
        if let Some(k) = flags.seeds {
            cfg.seeds = Some(k);
            cfg.seed = None;
        }
        if let Some(inner) = &flags.inner {
            cfg.inner = Some(parse_inner(inner)?);
        }
        Ok(cfg)
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("--dataset is required".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match (self.seed, self.seeds) {
            (Some(s), _) => vec![s],
            (None, Some(k)) => (0..k as u64).collect(),
            (None, None) => (0..DEFAULT_SEEDS as u64).collect(),
        }
    }

    pub fn protocol(&self) -> Result<Protocol> {
        let protocol = Protocol {
            splits: self.splits.unwrap_or_default(),
            train: self.train.clone().unwrap_or_default(),
            budget_frac: self.budget_frac.unwrap_or(DEFAULT_FRACTION),
            step_frac: self.step_frac.unwrap_or(DEFAULT_FRACTION),
        };
        protocol.train.validate()?;
        Ok(protocol)
    }

    pub fn methods(&self, default: &[AttackMethod]) -> Result<Vec<AttackMethod>> {
        match &self.method {
            None => Ok(default.to_vec()),
            Some(list) => list
                .split(',')
                .map(|m| {
                    m.trim()
                        .parse::<AttackMethod>()
                        .map_err(|e| CliError::Usage(e.to_string()))
                })
                .collect(),
        }
    }

    pub fn single_method(&self) -> Result<AttackMethod> {
        let methods = self.methods(&[AttackMethod::Gta])?;
        match methods.as_slice() {
            [m] => Ok(*m),
            _ => Err(CliError::Usage("expected exactly one --method".into())),
        }
    }

    pub fn rejection_cap(&self) -> usize {
        self.rejection_cap.unwrap_or(DEFAULT_REJECTION_CAP)
    }

    /// Every default filled in, paths to outputs dropped; embedded in reports.
    pub fn resolved(&self, protocol: &Protocol) -> Self {
        Self {
            out: None,
            seed: None,
            seeds: None,
            budget_frac: Some(protocol.budget_frac),
            step_frac: Some(protocol.step_frac),
            train: Some(protocol.train.clone()),
            splits: Some(protocol.splits),
            rejection_cap: Some(self.rejection_cap()),
            ..self.clone()
        }
        .with_seed_list(&self.seed_list())
    }

    fn with_seed_list(mut self, seeds: &[u64]) -> Self {
        if seeds.len() == 1 {
            self.seed = Some(seeds[0]);
        } else {
            self.seeds = Some(seeds.len());
        }
        self
    }
}

fn parse_inner(s: &str) -> Result<InnerAttack> {
    match s {
        "gta" => Ok(InnerAttack::Gta),
        "zo-gta" => Ok(InnerAttack::ZoGta),
        "none" => Ok(InnerAttack::None),
        other => Err(CliError::Usage(format!(
            "unknown inner attack `{other}` (expected gta, zo-gta or none)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"seeds": 3, "budget_frac": 0.1, "method": "dice", "inner": "zo-gta"}"#,
        )
        .unwrap();
        let flags = Flags {
            config: Some(path.clone()),
            method: Some("gta".into()),
            seed: Some(7),
            ..Flags::default()
        };
        let cfg = RunConfig::from_flags(&flags).unwrap();
        assert_eq!(cfg.seed_list(), vec![7]);
        assert_eq!(cfg.budget_frac, Some(0.1));
        assert_eq!(cfg.single_method().unwrap(), AttackMethod::Gta);
        assert_eq!(cfg.inner, Some(InnerAttack::ZoGta));

        let resolved = cfg.resolved(&cfg.protocol().unwrap());
        let text = serde_json::to_string(&resolved).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.seed_list(), vec![7]);
    }

    #[test]
    fn defaults_and_errors() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.seed_list(), vec![0, 1, 2, 3, 4]);
        assert!(cfg.dataset().is_err());
        let p = cfg.protocol().unwrap();
        assert_eq!((p.budget_frac, p.step_frac), (0.05, 0.05));
        let bad = RunConfig {
            method: Some("gta,pgd".into()),
            ..RunConfig::default()
        };
        assert!(bad.methods(&[]).is_err());
        assert!(parse_inner("pgd").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"sedes": 3}"#).unwrap();
        assert!(RunConfig::read(&path).is_err());
    }
}
