use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gta_core::attack::{format_flip_list, AttackReport, Dice, Gta, ZoGta};
use gta_core::experiment::{prepare, split_for, training_seed, PreparedRun, Protocol};
use gta_core::gcn::misclassification;
use gta_core::robust::robust_train_from;
use gta_core::synthetic::{generate, DatasetProfile};
use gta_core::{
    load_dataset, save_dataset, train_natural, AttackBudget, AttackMethod, GcnParams, Graph,
    InnerAttack, RobustTrainConfig, TopologyAttack,
};
use rayon::prelude::*;

use crate::checkpoint::{self, seed_dir};
use crate::config::{RunConfig, DEFAULT_BETA, DEFAULT_ITERATIONS, DEFAULT_STEP_GRID};
use crate::error::{CliError, Result};
use crate::report::{RunReport, SeedRow};

pub const MODELS_DIR: &str = "models";
pub const FLIPS_DIR: &str = "flips";

struct Session {
    config: RunConfig,
    protocol: Protocol,
    graph: Graph,
    seeds: Vec<u64>,
    out: PathBuf,
}

impl Session {
    fn open(config: RunConfig) -> Result<Self> {
        let protocol = config.protocol()?;
        let out = config.out()?.to_path_buf();
        let graph = load_dataset(config.dataset()?)?;
        let seeds = config.seed_list();
        if seeds.is_empty() {
            return Err(CliError::Usage("no seeds to run".into()));
        }
        Ok(Self {
            config,
            protocol,
            graph,
            seeds,
            out,
        })
    }

    fn budget(&self) -> Result<AttackBudget> {
        Ok(self.protocol.budget(self.graph.n())?)
    }

    fn load_model(&self, dir: &Path, seed: u64) -> Result<GcnParams> {
        let path = seed_dir(dir, seed);
        let (manifest, params) = checkpoint::load(&path)?;
        if manifest.seed != seed {
            return Err(CliError::checkpoint(
                &path,
                format!("trained under seed {}, requested {seed}", manifest.seed),
            ));
        }
        if params.feature_dim() != self.graph.feature_dim()
            || params.class_count() != self.graph.class_count()
        {
            return Err(CliError::checkpoint(
                &path,
                format!(
                    "model is for {} features and {} classes, dataset has {} and {}",
                    params.feature_dim(),
                    params.class_count(),
                    self.graph.feature_dim(),
                    self.graph.class_count()
                ),
            ));
        }
        Ok(params)
    }

    /// Split, natural model and pseudo-labels for `seed`. The natural model comes
    /// from `--natural`, else `--checkpoint`, else is trained here.
    fn natural_run(&self, seed: u64) -> Result<PreparedRun> {
        match self
            .config
            .natural
            .as_ref()
            .or(self.config.checkpoint.as_ref())
        {
            Some(dir) => {
                let graph = split_for(&self.graph, seed, self.protocol.splits)?;
                let natural = self.load_model(dir, seed)?;
                Ok(PreparedRun::from_natural(graph, seed, natural)?)
            }
            None => {
                let mut run = prepare(&self.graph, seed, &self.protocol)?;
                run.natural = checkpoint::quantize(&run.natural);
                Ok(PreparedRun::from_natural(run.graph, seed, run.natural)?)
            }
        }
    }

    fn victim(&self, run: &PreparedRun) -> Result<GcnParams> {
        match &self.config.checkpoint {
            Some(dir) => self.load_model(dir, run.seed),
            None => Ok(run.natural.clone()),
        }
    }

    fn attack_object(&self, method: AttackMethod) -> Box<dyn TopologyAttack> {
        match method {
            AttackMethod::Gta => Box::new(Gta),
            AttackMethod::ZoGta => Box::new(ZoGta {
                rejection_cap: self.config.rejection_cap(),
            }),
            AttackMethod::Dice => Box::new(Dice),
        }
    }

    fn write_flips(&self, name: &str, report: &AttackReport) -> Result<String> {
        let dir = self.out.join(FLIPS_DIR);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let relative = format!("{FLIPS_DIR}/{name}.txt");
        let path = self.out.join(&relative);
        fs::write(&path, format_flip_list(&report.perturbation.flips))
            .map_err(|e| CliError::io(&path, e))?;
        Ok(relative)
    }

    fn attack_row(
        &self,
        run: &PreparedRun,
        victim: &GcnParams,
        method: AttackMethod,
        budget: AttackBudget,
        tag: &str,
    ) -> Result<SeedRow> {
        let attack = self.attack_object(method);
        let report = run.attack_with(victim, attack.as_ref(), budget, run.seed)?;
        let flip_list = self.write_flips(&format!("{method}{tag}-seed-{}", run.seed), &report)?;
        Ok(SeedRow {
            seed: run.seed,
            setting: method.to_string(),
            step: (method != AttackMethod::Dice).then_some(budget.step),
            misclassification_pct: 100.0 * report.misclassification.unwrap_or(f64::NAN),
            wall_clock_s: report.wall_clock,
            iterations: Some(report.iterations),
            termination: Some(report.termination),
            flips: Some(report.perturbation.flips.len()),
            flip_list: Some(flip_list),
        })
    }

    fn clean_row(&self, run: &PreparedRun, victim: &GcnParams) -> Result<SeedRow> {
        let m = misclassification(victim, &run.graph, run.graph.adjacency())?;
        Ok(plain_row(run.seed, "clean", m, 0.0))
    }

    fn save_model(&self, params: &GcnParams, kind: &str, seed: u64) -> Result<()> {
        checkpoint::save(
            params,
            kind,
            seed,
            &seed_dir(&self.out.join(MODELS_DIR), seed),
        )?;
        Ok(())
    }

    fn finish(&self, command: &str, rows: Vec<SeedRow>, models: bool) -> Result<RunReport> {
        let mut report = RunReport::new(command, self.config.resolved(&self.protocol), rows);
        if models {
            for &s in &self.seeds {
                for f in [checkpoint::MANIFEST_FILE, "w1.bin", "w2.bin"] {
                    report.add_artifact(&self.out, &format!("{MODELS_DIR}/seed-{s}/{f}"))?;
                }
            }
        }
        let lists: Vec<String> = report
            .rows
            .iter()
            .filter_map(|r| r.flip_list.clone())
            .collect();
        for l in lists {
            report.add_artifact(&self.out, &l)?;
        }
        report.write(&self.out)?;
        Ok(report)
    }

    fn per_seed<F>(&self, f: F) -> Result<Vec<SeedRow>>
    where
        F: Fn(u64) -> Result<Vec<SeedRow>> + Sync,
    {
        let chunks: Vec<Vec<SeedRow>> = self
            .seeds
            .par_iter()
            .map(|&s| f(s))
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

fn plain_row(seed: u64, setting: &str, misclassification: f64, secs: f64) -> SeedRow {
    SeedRow {
        seed,
        setting: setting.into(),
        step: None,
        misclassification_pct: 100.0 * misclassification,
        wall_clock_s: secs,
        iterations: None,
        termination: None,
        flips: None,
        flip_list: None,
    }
}

/// Trains one natural model per seed and saves it under `models/`.
pub fn train(config: RunConfig) -> Result<RunReport> {
    let s = Session::open(config)?;
    let rows = s.per_seed(|seed| {
        let graph = split_for(&s.graph, seed, s.protocol.splits)?;
        let start = Instant::now();
        let params = train_natural(&graph, &s.protocol.train, training_seed(seed))?;
        let secs = start.elapsed().as_secs_f64();
        let params = checkpoint::quantize(&params);
        s.save_model(&params, "natural", seed)?;
        let m = misclassification(&params, &graph, graph.adjacency())?;
        Ok(vec![plain_row(seed, "natural", m, secs)])
    })?;
    s.finish("train", rows, true)
}

/// One attack per seed against the checkpoint, or a freshly trained natural model.
pub fn attack(config: RunConfig) -> Result<RunReport> {
    let s = Session::open(config)?;
    let method = s.config.single_method()?;
    let budget = s.budget()?;
    let rows = s.per_seed(|seed| {
        let run = s.natural_run(seed)?;
        let victim = s.victim(&run)?;
        Ok(vec![
            s.clean_row(&run, &victim)?,
            s.attack_row(&run, &victim, method, budget, "")?,
        ])
    })?;
    s.finish("attack", rows, false)
}

/// Adversarial training per seed; `--checkpoint` warm-starts from saved weights.
pub fn robust_train(config: RunConfig) -> Result<RunReport> {
    let s = Session::open(config)?;
    let budget = s.budget()?;
    let inner = s.config.inner.unwrap_or(InnerAttack::Gta);
    let rows = s.per_seed(|seed| {
        let graph = split_for(&s.graph, seed, s.protocol.splits)?;
        let rcfg = RobustTrainConfig {
            iterations: s.config.iterations.unwrap_or(DEFAULT_ITERATIONS),
            beta: s.config.beta.unwrap_or(DEFAULT_BETA),
            budget,
            inner_attack: inner,
            seed: training_seed(seed),
            hidden: s.protocol.train.hidden,
        };
        let init = match &s.config.checkpoint {
            Some(dir) => s.load_model(dir, seed)?,
            None => GcnParams::seeded(
                graph.feature_dim(),
                rcfg.hidden,
                graph.class_count(),
                rcfg.seed,
            ),
        };
        let attack = match inner {
            InnerAttack::ZoGta => Some(s.attack_object(AttackMethod::ZoGta)),
            other => other.attack(),
        };
        let start = Instant::now();
        let outcome = robust_train_from(&graph, &rcfg, init, attack.as_deref())?;
        let secs = start.elapsed().as_secs_f64();
        let params = checkpoint::quantize(&outcome.params);
        s.save_model(&params, "robust", seed)?;
        let m = misclassification(&params, &graph, graph.adjacency())?;
        Ok(vec![plain_row(seed, "robust", m, secs)])
    })?;
    let mut config = s.config.clone();
    config.inner = Some(inner);
    config.iterations = Some(config.iterations.unwrap_or(DEFAULT_ITERATIONS));
    config.beta = Some(config.beta.unwrap_or(DEFAULT_BETA));
    let s = Session { config, ..s };
    s.finish("robust-train", rows, true)
}

/// Clean and attacked misclassification of saved models; pseudo-labels come
/// from `--natural` when given.
pub fn eval(config: RunConfig) -> Result<RunReport> {
    if config.checkpoint.is_none() {
        return Err(CliError::Usage("eval needs --checkpoint".into()));
    }
    let s = Session::open(config)?;
    let methods = s.config.methods(&AttackMethod::ALL)?;
    let budget = s.budget()?;
    let rows = s.per_seed(|seed| {
        let run = s.natural_run(seed)?;
        let victim = s.victim(&run)?;
        let mut rows = vec![s.clean_row(&run, &victim)?];
        for &m in &methods {
            rows.push(s.attack_row(&run, &victim, m, budget, "")?);
        }
        Ok(rows)
    })?;
    s.finish("eval", rows, false)
}

/// Misclassification as a function of the greedy step for a fixed budget.
pub fn sweep_n(config: RunConfig) -> Result<RunReport> {
    let s = Session::open(config)?;
    let methods = s
        .config
        .methods(&[AttackMethod::Gta, AttackMethod::ZoGta])?;
    let grid = s
        .config
        .steps
        .clone()
        .unwrap_or_else(|| DEFAULT_STEP_GRID.to_vec());
    if grid.is_empty() {
        return Err(CliError::Usage("--steps grid is empty".into()));
    }
    let n = s.graph.n();
    let budgets: Vec<AttackBudget> = grid
        .iter()
        .map(|&f| AttackBudget::from_fractions(n, s.protocol.budget_frac, f))
        .collect::<gta_core::Result<_>>()?;
    let rows = s.per_seed(|seed| {
        let run = s.natural_run(seed)?;
        let victim = s.victim(&run)?;
        let mut rows = vec![s.clean_row(&run, &victim)?];
        for b in &budgets {
            for &m in &methods {
                rows.push(s.attack_row(&run, &victim, m, *b, &format!("-n{}", b.step))?);
            }
        }
        Ok(rows)
    })?;
    let mut config = s.config.clone();
    config.steps = Some(grid);
    let s = Session { config, ..s };
    s.finish("sweep-n", rows, false)
}

/// Writes a synthetic dataset in the neutral format.
pub fn generate_dataset(profile: &str, seed: u64, out: &Path) -> Result<()> {
    let p = DatasetProfile::by_name(profile).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown profile `{profile}` (expected cora, citeseer or pubmed)"
        ))
    })?;
    let graph = generate(&p, seed)?;
    save_dataset(&graph, &format!("synthetic-{profile}"), out)?;
    Ok(())
}
