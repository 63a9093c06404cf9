//! The evaluation protocol shared by the CLI and the acceptance suite: a seeded
//! split, a naturally trained victim, pseudo-labels from that victim, and
//! attacks scored on the test nodes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackBudget, AttackInput, AttackMethod, AttackReport, TopologyAttack};
use crate::data::{make_splits, pseudo_labels, Graph, SplitSizes};
use crate::error::Result;
use crate::gcn::{misclassification, train_natural, GcnParams, LossTarget, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub splits: SplitSizes,
    pub train: TrainConfig,
    /// M as a fraction of the node count.
    pub budget_frac: f64,
    /// Greedy step as a fraction of the node count.
    pub step_frac: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            splits: SplitSizes::default(),
            train: TrainConfig::default(),
            budget_frac: 0.05,
            step_frac: 0.05,
        }
    }
}

impl Protocol {
    pub fn budget(&self, nodes: usize) -> Result<AttackBudget> {
        AttackBudget::from_fractions(nodes, self.budget_frac, self.step_frac)
    }
}

/// Seed used for weight initialization and dropout, distinct from the split seed.
pub fn training_seed(seed: u64) -> u64 {
    seed ^ 0x7261_6e64_5eed
}

#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub seed: u64,
    pub graph: Graph,
    pub natural: GcnParams,
    pub pseudo_labels: Vec<usize>,
    /// Test misclassification of the natural model on the clean graph.
    pub clean: f64,
    pub train_seconds: f64,
}

impl PreparedRun {
    /// Wraps an already trained natural model. `graph` must carry its split.
    pub fn from_natural(graph: Graph, seed: u64, natural: GcnParams) -> Result<Self> {
        let pseudo = pseudo_labels(&graph, &natural)?;
        let clean = misclassification(&natural, &graph, graph.adjacency())?;
        Ok(Self {
            seed,
            graph,
            natural,
            pseudo_labels: pseudo,
            clean,
            train_seconds: 0.0,
        })
    }

    /// Test nodes scored against the natural model's predictions.
    pub fn eval_target(&self) -> LossTarget {
        LossTarget::select(self.graph.test(), &self.pseudo_labels)
    }

    /// Attacks `victim` on this run's graph. Fills in the report's misclassification.
    pub fn attack(
        &self,
        victim: &GcnParams,
        method: AttackMethod,
        budget: AttackBudget,
        seed: u64,
    ) -> Result<AttackReport> {
        self.attack_with(victim, method.attack().as_ref(), budget, seed)
    }

    pub fn attack_with(
        &self,
        victim: &GcnParams,
        attack: &dyn TopologyAttack,
        budget: AttackBudget,
        seed: u64,
    ) -> Result<AttackReport> {
        let target = self.eval_target();
        let input = AttackInput {
            graph: &self.graph,
            params: victim,
            target: &target,
            node_labels: &self.pseudo_labels,
            budget,
            seed,
        };
        let mut report = attack.run(&input)?;
        if report.misclassification.is_none() {
            report.misclassification =
                Some(misclassification(victim, &self.graph, &report.adjacency)?);
        }
        Ok(report)
    }

    pub fn clean_misclassification(&self, params: &GcnParams) -> Result<f64> {
        misclassification(params, &self.graph, self.graph.adjacency())
    }
}

/// The split for `seed`: the one stored with `base` if it has a training set,
/// otherwise a fresh seeded split.
pub fn split_for(base: &Graph, seed: u64, sizes: SplitSizes) -> Result<Graph> {
    if !base.train().is_empty() {
        return Ok(base.clone());
    }
    let splits = make_splits(base, seed, sizes)?;
    base.clone().with_splits(splits)
}

/// Splits `base` with `seed`, trains the natural model and derives pseudo-labels.
pub fn prepare(base: &Graph, seed: u64, protocol: &Protocol) -> Result<PreparedRun> {
    let graph = split_for(base, seed, protocol.splits)?;
    let start = Instant::now();
    let natural = train_natural(&graph, &protocol.train, training_seed(seed))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let mut run = PreparedRun::from_natural(graph, seed, natural)?;
    run.train_seconds = train_seconds;
    Ok(run)
}
