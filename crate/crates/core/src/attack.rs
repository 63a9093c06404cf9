//! Topology attacks under a flip budget: gradient-guided greedy search (GTA),
//! its zeroth-order variant (ZO-GTA) and the DICE random baseline.
//!
//! All attacks perturb upper-triangle pairs `(i, j)`, `i < j`, and mirror
//! each flip, so `‖A′ − A‖₀` is always twice the number of net flips.

use std::borrow::Cow;
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::gcn::{
    adjacency_gradient, forward_projected, loss_ce, misclassification, AdjacencyGradient,
    GcnParams, LossTarget,
};
use crate::sparse::{DenseMat, SparseSym};

pub const DEFAULT_REJECTION_CAP: usize = 500;

pub type Pair = (usize, usize);

/// `max_flips` is the budget M in undirected edges; `step` is the number of
/// pairs changed per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub max_flips: usize,
    pub step: usize,
}

impl AttackBudget {
    pub fn new(max_flips: usize, step: usize) -> Result<Self> {
        if step == 0 {
            return Err(Error::Config("greedy step must be at least 1".into()));
        }
        Ok(Self { max_flips, step })
    }

    /// `M = ⌈budget_frac · n⌉`, `step = ⌈step_frac · n⌉` (at least 1).
    pub fn from_fractions(nodes: usize, budget_frac: f64, step_frac: f64) -> Result<Self> {
        if !(budget_frac >= 0.0) || !(step_frac > 0.0) {
            return Err(Error::Config(format!(
                "budget fraction {budget_frac} must be >= 0 and step fraction {step_frac} > 0"
            )));
        }
        let m = ceil_frac(nodes, budget_frac);
        let s = ceil_frac(nodes, step_frac).max(1);
        Self::new(m, s)
    }
}

/// `⌈frac · n⌉`, computed so that e.g. 0.05 · 2708 gives 136 rather than 136.00000000000003 → 137.
pub fn ceil_frac(n: usize, frac: f64) -> usize {
    let x = frac * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSet {
    /// Applied pairs in order.
    pub flips: Vec<Pair>,
    /// Every pair ever touched.
    pub record: BTreeSet<Pair>,
    /// Number of pairs applied by each accepted iteration.
    pub step_sizes: Vec<usize>,
}

impl PerturbationSet {
    fn apply(&mut self, pairs: &[Pair]) {
        self.flips.extend_from_slice(pairs);
        self.record.extend(pairs.iter().copied());
        self.step_sizes.push(pairs.len());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    BudgetReached,
    CandidatesExhausted,
    RejectionCap,
    NoFeasibleAction,
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub adjacency: SparseSym,
    pub perturbation: PerturbationSet,
    /// GTA: loss before every gradient step plus the final loss.
    /// ZO-GTA: initial loss followed by every accepted loss.
    pub loss_trace: Vec<f64>,
    /// Seconds spent in the attack loop only.
    pub wall_clock: f64,
    /// Test-set misclassification on the perturbed graph, when the attack knows the victim.
    pub misclassification: Option<f64>,
    pub termination: Termination,
    /// Gradient evaluations (GTA), loss queries (ZO-GTA) or flips (DICE).
    pub iterations: usize,
    /// GTA picks that had a non-positive score because too few positive ones remained.
    pub nonpositive_picks: usize,
}

/// `S = g ⊙ (1 − 2A′)`: positive where flipping the entry raises the loss to first order.
pub fn score_matrix(grad: &DenseMat, adj: &SparseSym) -> Result<DenseMat> {
    let n = adj.n();
    if grad.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "gradient is {}x{}, adjacency has {n} nodes",
            grad.rows(),
            grad.cols()
        )));
    }
    let mut s = grad.clone();
    for (i, j, v) in adj.entries() {
        s.set(i, j, grad.get(i, j) * (1.0 - 2.0 * v));
    }
    Ok(s)
}

/// Candidate ordering: higher score first, then lexicographically smaller pair.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    pair: Pair,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

fn push_bounded(heap: &mut BinaryHeap<Reverse<Ranked>>, r: Ranked, k: usize) {
    if heap.len() < k {
        heap.push(Reverse(r));
    } else if let Some(Reverse(worst)) = heap.peek() {
        if r > *worst {
            heap.pop();
            heap.push(Reverse(r));
        }
    }
}

/// Top-`k` eligible upper-triangle pairs by coupled score `S_ij + S_ji`,
/// best first. `excluded[i]` holds the sorted columns `j > i` already in R.
fn select_top(
    grad: &AdjacencyGradient,
    adj: &SparseSym,
    excluded: &[Vec<usize>],
    k: usize,
) -> Vec<Ranked> {
    let n = adj.n();
    if k == 0 {
        return Vec::new();
    }
    let merged = (0..n)
        .into_par_iter()
        .fold(BinaryHeap::new, |mut heap, i| {
            let (cols, _) = adj.row(i);
            let mut e = cols.partition_point(|&c| c <= i);
            let skip = &excluded[i];
            let mut s = 0;
            for j in i + 1..n {
                let present = e < cols.len() && cols[e] == j;
                if present {
                    e += 1;
                }
                if s < skip.len() && skip[s] == j {
                    s += 1;
                    continue;
                }
                let sign = if present { -1.0 } else { 1.0 };
                // + 0.0 folds -0.0 into 0.0 so exact ties compare equal
                let score = grad.coupled(i, j) * sign + 0.0;
                push_bounded(
                    &mut heap,
                    Ranked {
                        score,
                        pair: (i, j),
                    },
                    k,
                );
            }
            heap
        })
        .reduce(BinaryHeap::new, |mut a, b| {
            for Reverse(r) in b {
                push_bounded(&mut a, r, k);
            }
            a
        });
    let mut out: Vec<Ranked> = merged.into_iter().map(|Reverse(r)| r).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

fn require_target(target: &LossTarget) -> Result<()> {
    if target.is_empty() {
        Err(Error::EmptyMask)
    } else {
        Ok(())
    }
}

/// Greedy topology attack: one adjacency gradient per iteration, then the
/// `step` best-scoring pairs not yet in the record are flipped.
pub fn gta(
    graph: &Graph,
    params: &GcnParams,
    budget: AttackBudget,
    target: &LossTarget,
) -> Result<AttackReport> {
    require_target(target)?;
    let start = Instant::now();
    let n = graph.n();
    let projected = graph.features().matmul(&params.w1)?;
    let mut adj = graph.adjacency().clone();
    let mut pert = PerturbationSet::default();
    let mut excluded: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut loss_trace = Vec::new();
    let mut iterations = 0;
    let mut nonpositive = 0;
    let mut termination = Termination::BudgetReached;

    while pert.flips.len() < budget.max_flips {
        let k = budget.step.min(budget.max_flips - pert.flips.len());
        let ctx = forward_projected(&adj, Cow::Borrowed(&projected), params, target.clone())?;
        loss_trace.push(loss_ce(&ctx)?);
        let grad = adjacency_gradient(&ctx, params)?;
        iterations += 1;
        let picks = select_top(&grad, &adj, &excluded, k);
        if picks.is_empty() {
            termination = Termination::CandidatesExhausted;
            break;
        }
        nonpositive += picks.iter().filter(|r| r.score <= 0.0).count();
        let pairs: Vec<Pair> = picks.iter().map(|r| r.pair).collect();
        adj = adj.flip_edges(&pairs)?;
        for &(i, j) in &pairs {
            let row = &mut excluded[i];
            let at = row.partition_point(|&c| c < j);
            row.insert(at, j);
        }
        pert.apply(&pairs);
        if picks.len() < k {
            termination = Termination::CandidatesExhausted;
            break;
        }
    }
    let ctx = forward_projected(&adj, Cow::Borrowed(&projected), params, target.clone())?;
    loss_trace.push(loss_ce(&ctx)?);
    let wall_clock = start.elapsed().as_secs_f64();
    let misclassification = misclassification(params, graph, &adj)?;
    Ok(AttackReport {
        adjacency: adj,
        perturbation: pert,
        loss_trace,
        wall_clock,
        misclassification: Some(misclassification),
        termination,
        iterations,
        nonpositive_picks: nonpositive,
    })
}

/// Uniform sample of `k` distinct upper-triangle pairs.
fn sample_pairs<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<Pair> {
    let mut seen = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let p = (i.min(j), i.max(j));
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Zeroth-order greedy attack: random batches of flips are kept only when
/// they strictly raise the loss above the best accepted value so far.
pub fn zo_gta(
    graph: &Graph,
    params: &GcnParams,
    budget: AttackBudget,
    target: &LossTarget,
    seed: u64,
) -> Result<AttackReport> {
    zo_gta_capped(graph, params, budget, target, seed, DEFAULT_REJECTION_CAP)
}

pub fn zo_gta_capped(
    graph: &Graph,
    params: &GcnParams,
    budget: AttackBudget,
    target: &LossTarget,
    seed: u64,
    rejection_cap: usize,
) -> Result<AttackReport> {
    require_target(target)?;
    let start = Instant::now();
    let n = graph.n();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projected = graph.features().matmul(&params.w1)?;
    let loss_of = |adj: &SparseSym| -> Result<f64> {
        let ctx = forward_projected(adj, Cow::Borrowed(&projected), params, target.clone())?;
        loss_ce(&ctx)
    };

    let mut adj = graph.adjacency().clone();
    let mut best = loss_of(&adj)?;
    let mut loss_trace = vec![best];
    let mut pert = PerturbationSet::default();
    // pairs currently differing from the clean graph
    let mut net: BTreeSet<Pair> = BTreeSet::new();
    let mut rejections = 0;
    let mut iterations = 0;
    let mut termination = Termination::BudgetReached;

    while net.len() < budget.max_flips {
        let k = budget
            .step
            .min(budget.max_flips - net.len())
            .min(total_pairs);
        if k == 0 {
            termination = Termination::CandidatesExhausted;
            break;
        }
        let pairs = sample_pairs(n, k, &mut rng);
        let candidate = adj.flip_edges(&pairs)?;
        let loss = loss_of(&candidate)?;
        iterations += 1;
        if loss > best {
            adj = candidate;
            best = loss;
            loss_trace.push(loss);
            for &p in &pairs {
                if !net.remove(&p) {
                    net.insert(p);
                }
            }
            pert.apply(&pairs);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= rejection_cap {
                termination = Termination::RejectionCap;
                break;
            }
        }
    }
    let wall_clock = start.elapsed().as_secs_f64();
    let misclassification = misclassification(params, graph, &adj)?;
    Ok(AttackReport {
        adjacency: adj,
        perturbation: pert,
        loss_trace,
        wall_clock,
        misclassification: Some(misclassification),
        termination,
        iterations,
        nonpositive_picks: 0,
    })
}

/// DICE: delete edges inside a class, connect nodes across classes.
pub fn dice(graph: &Graph, labels: &[usize], max_flips: usize, seed: u64) -> Result<AttackReport> {
    let n = graph.n();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adj = graph.adjacency();
    let mut deletable: Vec<Pair> = adj
        .upper_edges()
        .into_iter()
        .filter(|&(i, j)| labels[i] == labels[j])
        .collect();

    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0u64; classes];
    for &l in labels {
        sizes[l] += 1;
    }
    let n64 = n as u64;
    let cross_pairs = (n64 * n64 - sizes.iter().map(|s| s * s).sum::<u64>()) / 2;
    let cross_edges = adj
        .upper_edges()
        .iter()
        .filter(|&&(i, j)| labels[i] != labels[j])
        .count() as u64;
    let mut insertable = cross_pairs - cross_edges;
    let mut inserted: HashSet<Pair> = HashSet::new();

    let mut pairs = Vec::with_capacity(max_flips);
    let mut termination = Termination::BudgetReached;
    while pairs.len() < max_flips {
        let can_delete = !deletable.is_empty();
        let can_insert = insertable > 0;
        let delete = match (can_delete, can_insert) {
            (false, false) => {
                termination = Termination::NoFeasibleAction;
                break;
            }
            (true, false) => true,
            (false, true) => false,
            (true, true) => rng.gen_bool(0.5),
        };
        if delete {
            let idx = rng.gen_range(0..deletable.len());
            pairs.push(deletable.swap_remove(idx));
        } else {
            let p = sample_insertion(adj, labels, &inserted, insertable, &mut rng);
            inserted.insert(p);
            insertable -= 1;
            pairs.push(p);
        }
    }
    let perturbed = adj.flip_edges(&pairs)?;
    let mut pert = PerturbationSet::default();
    if !pairs.is_empty() {
        pert.apply(&pairs);
    }
    Ok(AttackReport {
        adjacency: perturbed,
        iterations: pairs.len(),
        perturbation: pert,
        loss_trace: Vec::new(),
        wall_clock: start.elapsed().as_secs_f64(),
        misclassification: None,
        termination,
        nonpositive_picks: 0,
    })
}

fn sample_insertion<R: Rng>(
    adj: &SparseSym,
    labels: &[usize],
    inserted: &HashSet<Pair>,
    available: u64,
    rng: &mut R,
) -> Pair {
    let n = adj.n();
    let ok = |i: usize, j: usize| {
        labels[i] != labels[j] && !adj.contains(i, j) && !inserted.contains(&(i, j))
    };
    for _ in 0..1024 {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            let p = (i.min(j), i.max(j));
            if ok(p.0, p.1) {
                return p;
            }
        }
    }
    // nearly saturated: enumerate what is left
    let mut left = Vec::with_capacity(available as usize);
    for i in 0..n {
        for j in i + 1..n {
            if ok(i, j) {
                left.push((i, j));
            }
        }
    }
    *left.choose(rng).expect("insertable count is positive")
}

/// Everything an attack may consult.
#[derive(Debug, Clone, Copy)]
pub struct AttackInput<'a> {
    pub graph: &'a Graph,
    pub params: &'a GcnParams,
    /// Loss the gradient-based attacks maximize.
    pub target: &'a LossTarget,
    /// Per-node labels for label-driven baselines.
    pub node_labels: &'a [usize],
    pub budget: AttackBudget,
    pub seed: u64,
}

/// Any procedure producing `A′ ∈ C`: binary, symmetric, diagonal-free, `‖A′ − A‖₀ ≤ 2M`.
pub trait TopologyAttack: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, input: &AttackInput<'_>) -> Result<AttackReport>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gta;

#[derive(Debug, Clone, Copy)]
pub struct ZoGta {
    pub rejection_cap: usize,
}

impl Default for ZoGta {
    fn default() -> Self {
        Self {
            rejection_cap: DEFAULT_REJECTION_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Dice;

impl TopologyAttack for Gta {
    fn name(&self) -> &str {
        "gta"
    }

    fn run(&self, input: &AttackInput<'_>) -> Result<AttackReport> {
        gta(input.graph, input.params, input.budget, input.target)
    }
}

impl TopologyAttack for ZoGta {
    fn name(&self) -> &str {
        "zo-gta"
    }

    fn run(&self, input: &AttackInput<'_>) -> Result<AttackReport> {
        zo_gta_capped(
            input.graph,
            input.params,
            input.budget,
            input.target,
            input.seed,
            self.rejection_cap,
        )
    }
}

impl TopologyAttack for Dice {
    fn name(&self) -> &str {
        "dice"
    }

    fn run(&self, input: &AttackInput<'_>) -> Result<AttackReport> {
        let mut report = dice(
            input.graph,
            input.node_labels,
            input.budget.max_flips,
            input.seed,
        )?;
        report.misclassification = Some(misclassification(
            input.params,
            input.graph,
            &report.adjacency,
        )?);
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMethod {
    Gta,
    ZoGta,
    Dice,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 3] = [AttackMethod::Gta, AttackMethod::ZoGta, AttackMethod::Dice];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Gta => "gta",
            AttackMethod::ZoGta => "zo-gta",
            AttackMethod::Dice => "dice",
        }
    }

    pub fn attack(self) -> Box<dyn TopologyAttack> {
        match self {
            AttackMethod::Gta => Box::new(Gta),
            AttackMethod::ZoGta => Box::new(ZoGta::default()),
            AttackMethod::Dice => Box::new(Dice),
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gta" => Ok(AttackMethod::Gta),
            "zo-gta" | "zogta" | "zo_gta" => Ok(AttackMethod::ZoGta),
            "dice" => Ok(AttackMethod::Dice),
            other => Err(Error::Config(format!(
                "unknown attack method `{other}` (expected gta, zo-gta or dice)"
            ))),
        }
    }
}

/// One `i j` line per pair, in application order.
pub fn format_flip_list(flips: &[Pair]) -> String {
    let mut s = String::with_capacity(flips.len() * 12);
    for (i, j) in flips {
        s.push_str(&format!("{i} {j}\n"));
    }
    s
}

pub fn parse_flip_list(text: &str) -> Result<Vec<Pair>> {
    text.lines()
        .enumerate()
        .map(|(k, line)| {
            let mut it = line.split_ascii_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) if i < j => Ok((i, j)),
                _ => Err(Error::Config(format!(
                    "flip list line {}: expected `i j` with i < j",
                    k + 1
                ))),
            }
        })
        .collect()
}

/// Verifies `A′ ∈ C` against the clean adjacency.
pub fn check_constraints(
    clean: &SparseSym,
    perturbed: &SparseSym,
    max_flips: usize,
) -> std::result::Result<(), String> {
    if !perturbed.is_binary() {
        return Err("perturbed matrix is not binary".into());
    }
    perturbed.check_invariants(false)?;
    let d = clean.distance(perturbed).map_err(|e| e.to_string())?;
    if d % 2 != 0 {
        return Err(format!("odd distance {d}"));
    }
    if d > 2 * max_flips {
        return Err(format!("distance {d} exceeds 2M = {}", 2 * max_flips));
    }
    Ok(())
}
