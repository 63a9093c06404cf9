//! Min-max adversarial training: each outer step attacks the current model on
//! the training loss, then takes one gradient step on the perturbed graph.

use serde::{Deserialize, Serialize};

use crate::attack::{AttackBudget, AttackInput, Gta, TopologyAttack, ZoGta};
use crate::data::Graph;
use crate::error::{Error, Result};
use crate::gcn::{
    forward, grad_params, loss_ce, misclassification, predict, GcnParams, LossTarget,
    DEFAULT_HIDDEN,
};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerAttack {
    Gta,
    ZoGta,
    None,
}

impl InnerAttack {
    pub fn attack(self) -> Option<Box<dyn TopologyAttack>> {
        match self {
            InnerAttack::Gta => Some(Box::new(Gta)),
            InnerAttack::ZoGta => Some(Box::new(ZoGta::default())),
            InnerAttack::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustTrainConfig {
    /// Outer iterations T.
    pub iterations: usize,
    /// Outer learning rate β.
    pub beta: f64,
    pub budget: AttackBudget,
    pub inner_attack: InnerAttack,
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

impl RobustTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobustOutcome {
    pub params: GcnParams,
    /// Training loss on the perturbed graph at every outer step, before the update.
    pub adversarial_loss: Vec<f64>,
    /// Net flips the inner attack used at every outer step.
    pub flips_used: Vec<usize>,
}

/// Per-iteration seed for randomized inner attacks.
fn step_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(t as u64)
        .rotate_left(17)
}

pub fn robust_train(graph: &Graph, config: &RobustTrainConfig) -> Result<GcnParams> {
    let attack = config.inner_attack.attack();
    Ok(robust_train_with(graph, config, attack.as_deref())?.params)
}

/// Adversarial training with any attack honoring the flip-budget contract.
/// `None` runs plain gradient descent on the clean graph.
pub fn robust_train_with(
    graph: &Graph,
    config: &RobustTrainConfig,
    attack: Option<&dyn TopologyAttack>,
) -> Result<RobustOutcome> {
    let init = GcnParams::seeded(
        graph.feature_dim(),
        config.hidden,
        graph.class_count(),
        config.seed,
    );
    robust_train_from(graph, config, init, attack)
}

/// [`robust_train_with`] starting from `init` instead of the seeded initialization.
pub fn robust_train_from(
    graph: &Graph,
    config: &RobustTrainConfig,
    init: GcnParams,
    attack: Option<&dyn TopologyAttack>,
) -> Result<RobustOutcome> {
    config.validate()?;
    if graph.train().is_empty() {
        return Err(Error::EmptyMask);
    }
    let (f, c) = (init.feature_dim(), init.class_count());
    if f != graph.feature_dim() || c != graph.class_count() {
        return Err(Error::Shape(format!(
            "initial weights are for {f} features and {c} classes, graph has {} and {}",
            graph.feature_dim(),
            graph.class_count()
        )));
    }
    let mut params = init;
    let target = LossTarget::select(graph.train(), graph.labels());
    let mut adversarial_loss = Vec::with_capacity(config.iterations);
    let mut flips_used = Vec::with_capacity(config.iterations);

    for t in 1..=config.iterations {
        let perturbed;
        let adj = match attack {
            Some(attack) => {
                // labels beyond the training nodes come from the current model, never the ground truth
                let mut node_labels = predict(&params, graph)?;
                for &v in graph.train() {
                    node_labels[v] = graph.labels()[v];
                }
                let input = AttackInput {
                    graph,
                    params: &params,
                    target: &target,
                    node_labels: &node_labels,
                    budget: config.budget,
                    seed: step_seed(config.seed, t),
                };
                let report = attack.run(&input)?;
                let used = graph.adjacency().distance(&report.adjacency)?;
                if used > 2 * config.budget.max_flips {
                    return Err(Error::Config(format!(
                        "attack `{}` used {} entries, budget allows {}",
                        attack.name(),
                        used,
                        2 * config.budget.max_flips
                    )));
                }
                flips_used.push(used / 2);
                perturbed = report.adjacency;
                &perturbed
            }
            None => {
                flips_used.push(0);
                graph.adjacency()
            }
        };
        let ctx = forward(adj, graph.features(), &params, target.clone())?;
        let loss = loss_ce(&ctx).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("outer step {t}: {m}")),
            e => e,
        })?;
        adversarial_loss.push(loss);
        let (dw1, dw2) = grad_params(&ctx, &params)?;
        params.w1.axpy(-config.beta, &dw1)?;
        params.w2.axpy(-config.beta, &dw2)?;
        if !params.is_finite() {
            return Err(Error::NonFinite(format!(
                "weights diverged at outer step {t}"
            )));
        }
    }
    Ok(RobustOutcome {
        params,
        adversarial_loss,
        flips_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack: String,
    /// Misclassification fraction per seed.
    pub per_seed: Vec<f64>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub clean: f64,
    pub attacks: Vec<AttackSummary>,
}

/// Misclassification of `params` without attack and under each attack, one
/// run per seed. `pseudo_labels` come from an independently trained model.
pub fn evaluate_robustness(
    params: &GcnParams,
    graph: &Graph,
    pseudo_labels: &[usize],
    attacks: &[&dyn TopologyAttack],
    budget: AttackBudget,
    seeds: &[u64],
) -> Result<RobustnessReport> {
    let clean = misclassification(params, graph, graph.adjacency())?;
    let target = LossTarget::select(graph.test(), pseudo_labels);
    let mut rows = Vec::with_capacity(attacks.len());
    for attack in attacks {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let input = AttackInput {
                graph,
                params,
                target: &target,
                node_labels: pseudo_labels,
                budget,
                seed,
            };
            let report = attack.run(&input)?;
            let m = match report.misclassification {
                Some(m) => m,
                None => misclassification(params, graph, &report.adjacency)?,
            };
            per_seed.push(m);
        }
        rows.push(AttackSummary {
            attack: attack.name().to_string(),
            summary: Summary::of(&per_seed),
            per_seed,
        });
    }
    Ok(RobustnessReport {
        clean,
        attacks: rows,
    })
}
