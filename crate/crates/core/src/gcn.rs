//! Two-layer graph convolutional network with hand-written backpropagation.
//!
//! `logits = Ã · ReLU(Ã X W1) · W2` where `Ã` is the normalized adjacency.
//! Besides the usual weight gradients, [`adjacency_gradient`] differentiates
//! the loss with respect to every adjacency entry, including the path through
//! the degree normalization.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::sparse::{dot, normalize_adjacency, DenseMat, RowSparse, SparseSym};

pub const DEFAULT_HIDDEN: usize = 16;

/// Weights of the two graph convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// features × hidden
    pub w1: DenseMat,
    /// hidden × classes
    pub w2: DenseMat,
}

impl GcnParams {
    pub fn new(w1: DenseMat, w2: DenseMat) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::Shape(format!(
                "W1 is {}x{} but W2 is {}x{}",
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            )));
        }
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::NonFinite("weights".into()));
        }
        Ok(Self { w1, w2 })
    }

    /// Glorot-uniform initialization drawn from `rng`.
    pub fn init<R: Rng>(features: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(features, hidden, rng),
            w2: glorot(hidden, classes, rng),
        }
    }

    pub fn seeded(features: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        Self::init(
            features,
            hidden,
            classes,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn class_count(&self) -> usize {
        self.w2.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite()
    }
}

fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMat {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    DenseMat::from_vec(fan_in, fan_out, data).expect("finite init")
}

/// Nodes whose cross-entropy is averaged, each with the label it is scored against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LossTarget {
    nodes: Vec<usize>,
    labels: Vec<usize>,
}

impl LossTarget {
    pub fn new(nodes: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        if nodes.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} target nodes but {} labels",
                nodes.len(),
                labels.len()
            )));
        }
        Ok(Self { nodes, labels })
    }

    /// Picks each node's label out of a per-node label vector.
    pub fn select(nodes: &[usize], per_node: &[usize]) -> Self {
        Self {
            nodes: nodes.to_vec(),
            labels: nodes.iter().map(|&v| per_node[v]).collect(),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Cached intermediates of one forward pass plus the loss target.
#[derive(Debug, Clone)]
pub struct LossContext<'a> {
    pub normalized: SparseSym,
    /// Row sums of `A + I`.
    pub degrees: Vec<f64>,
    /// Layer-one input (after dropout when training). Absent when the pass
    /// started from a precomputed projection.
    pub input: Option<Cow<'a, DenseMat>>,
    /// `X W1`
    pub projected: Cow<'a, DenseMat>,
    /// `Ã X W1`
    pub pre_hidden: DenseMat,
    /// Layer-two input: `ReLU(pre_hidden)`, after dropout when training.
    pub hidden: DenseMat,
    /// Per-entry dropout multipliers applied to the hidden layer.
    pub hidden_dropout: Option<Vec<f64>>,
    /// `hidden · W2`
    pub hidden_out: DenseMat,
    pub logits: DenseMat,
    pub probs: DenseMat,
    pub target: LossTarget,
}

fn check_target(target: &LossTarget, n: usize, classes: usize) -> Result<()> {
    for (&v, &l) in target.nodes.iter().zip(&target.labels) {
        if v >= n {
            return Err(Error::OutOfRange { index: v, n });
        }
        if l >= classes {
            return Err(Error::Config(format!(
                "target label {l} outside [0, {classes})"
            )));
        }
    }
    Ok(())
}

/// Deterministic forward pass (no dropout).
pub fn forward<'a>(
    adj: &SparseSym,
    features: &'a DenseMat,
    params: &GcnParams,
    target: LossTarget,
) -> Result<LossContext<'a>> {
    if features.rows() != adj.n() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            adj.n()
        )));
    }
    if features.cols() != params.w1.rows() {
        return Err(Error::Shape(format!(
            "{} features but W1 has {} rows",
            features.cols(),
            params.w1.rows()
        )));
    }
    let projected = features.matmul(&params.w1)?;
    let mut ctx = forward_projected(adj, Cow::Owned(projected), params, target)?;
    ctx.input = Some(Cow::Borrowed(features));
    Ok(ctx)
}

/// Forward pass from a precomputed `X W1`. The attacks keep the weights fixed,
/// so the projection is computed once per attack.
pub fn forward_projected<'a>(
    adj: &SparseSym,
    projected: Cow<'a, DenseMat>,
    params: &GcnParams,
    target: LossTarget,
) -> Result<LossContext<'a>> {
    forward_inner(adj, None, projected, params, target, None)
}

fn forward_inner<'a>(
    adj: &SparseSym,
    input: Option<Cow<'a, DenseMat>>,
    projected: Cow<'a, DenseMat>,
    params: &GcnParams,
    target: LossTarget,
    hidden_dropout: Option<Vec<f64>>,
) -> Result<LossContext<'a>> {
    let n = adj.n();
    if projected.rows() != n || projected.cols() != params.w2.rows() {
        return Err(Error::Shape(format!(
            "projection is {}x{}, expected {n}x{}",
            projected.rows(),
            projected.cols(),
            params.w2.rows()
        )));
    }
    check_target(&target, n, params.class_count())?;
    let degrees: Vec<f64> = (0..n)
        .map(|i| 1.0 + adj.row(i).1.iter().sum::<f64>())
        .collect();
    let normalized = normalize_adjacency(adj);
    let pre_hidden = normalized.spmm(&projected)?;
    let mut hidden = pre_hidden.map(|v| v.max(0.0));
    if let Some(scale) = &hidden_dropout {
        for (h, s) in hidden.data_mut().iter_mut().zip(scale) {
            *h *= s;
        }
    }
    let hidden_out = hidden.matmul(&params.w2)?;
    let logits = normalized.spmm(&hidden_out)?;
    let probs = softmax_rows(&logits);
    Ok(LossContext {
        normalized,
        degrees,
        input,
        projected,
        pre_hidden,
        hidden,
        hidden_dropout,
        hidden_out,
        logits,
        probs,
        target,
    })
}

fn softmax_rows(logits: &DenseMat) -> DenseMat {
    let mut probs = logits.clone();
    let c = logits.cols();
    if c == 0 {
        return probs;
    }
    for row in probs.data_mut().chunks_mut(c) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Mean cross-entropy over the target nodes.
pub fn loss_ce(ctx: &LossContext<'_>) -> Result<f64> {
    if ctx.target.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut total = 0.0;
    for (&v, &l) in ctx.target.nodes.iter().zip(&ctx.target.labels) {
        let row = ctx.logits.row(v);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[l];
    }
    let loss = total / ctx.target.nodes.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss}")));
    }
    Ok(loss)
}

/// `∂L/∂logits`, nonzero only on target rows.
fn logit_grad(ctx: &LossContext<'_>) -> DenseMat {
    let (n, c) = ctx.logits.shape();
    let mut g = DenseMat::zeros(n, c);
    if ctx.target.is_empty() {
        return g;
    }
    let inv = 1.0 / ctx.target.nodes.len() as f64;
    for (&v, &l) in ctx.target.nodes.iter().zip(&ctx.target.labels) {
        let p = ctx.probs.row(v);
        let row = g.row_mut(v);
        for (k, (gk, &pk)) in row.iter_mut().zip(p).enumerate() {
            *gk += inv * (pk - if k == l { 1.0 } else { 0.0 });
        }
    }
    g
}

struct Backprop {
    logit_grad: DenseMat,
    pre_hidden_grad: DenseMat,
    dw2: DenseMat,
}

fn backprop(ctx: &LossContext<'_>, params: &GcnParams) -> Result<Backprop> {
    if params.w2.rows() != ctx.hidden.cols() || params.w2.cols() != ctx.logits.cols() {
        return Err(Error::Shape(
            "context was produced by different parameters".into(),
        ));
    }
    let logit_grad = logit_grad(ctx);
    // Ã is symmetric, so Ãᵀ G = Ã G
    let out_grad = ctx.normalized.spmm(&logit_grad)?;
    let dw2 = ctx.hidden.t_matmul(&out_grad)?;
    let mut pre_hidden_grad = out_grad.matmul_t(&params.w2)?;
    if let Some(scale) = &ctx.hidden_dropout {
        for (g, s) in pre_hidden_grad.data_mut().iter_mut().zip(scale) {
            *g *= s;
        }
    }
    for (g, &u) in pre_hidden_grad
        .data_mut()
        .iter_mut()
        .zip(ctx.pre_hidden.data())
    {
        if u <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(Backprop {
        logit_grad,
        pre_hidden_grad,
        dw2,
    })
}

/// Exact gradients of [`loss_ce`] with respect to `W1` and `W2`.
pub fn grad_params(ctx: &LossContext<'_>, params: &GcnParams) -> Result<(DenseMat, DenseMat)> {
    let input = ctx
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("context has no layer-one input".into()))?;
    if input.cols() != params.w1.rows() {
        return Err(Error::Shape(
            "context was produced by different parameters".into(),
        ));
    }
    let bp = backprop(ctx, params)?;
    let projected_grad = ctx.normalized.spmm(&bp.pre_hidden_grad)?;
    let dw1 = input.t_matmul(&projected_grad)?;
    Ok((dw1, bp.dw2))
}

/// Low-rank factorization of `∂L/∂A′`.
///
/// With `G = ∂L/∂Ã = left · rightᵀ` and `d` the degrees of `A′ + I`, the
/// derivative for a single entry is `G_ij / sqrt(d_i d_j) + δ_i`, where `δ_i`
/// collects the dependence of row and column `i` of `Ã` on `d_i`. [`pair`]
/// returns the symmetrized value `½(∂_ij + ∂_ji)`, so the derivative of a
/// mirrored flip of `{i, j}` is exactly twice that.
///
/// [`pair`]: AdjacencyGradient::pair
#[derive(Debug, Clone)]
pub struct AdjacencyGradient {
    left: DenseMat,
    right: DenseMat,
    active: Vec<bool>,
    inv_sqrt_degree: Vec<f64>,
    delta: Vec<f64>,
}

impl AdjacencyGradient {
    pub fn n(&self) -> usize {
        self.delta.len()
    }

    /// Symmetrized `∂L/∂A′_ij`; zero on the diagonal. Bit-identical for `(i, j)` and `(j, i)`.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let mut g = 0.0;
        if self.active[i] {
            g += dot(self.left.row(i), self.right.row(j));
        }
        if self.active[j] {
            g += dot(self.left.row(j), self.right.row(i));
        }
        let scale = self.inv_sqrt_degree[i] * self.inv_sqrt_degree[j];
        0.5 * (g * scale + (self.delta[i] + self.delta[j]))
    }

    /// Derivative of the loss for a mirrored change of `A′_ij` and `A′_ji`.
    #[inline]
    pub fn coupled(&self, i: usize, j: usize) -> f64 {
        2.0 * self.pair(i, j)
    }

    pub fn to_dense(&self) -> DenseMat {
        let n = self.n();
        let mut out = DenseMat::zeros(n, n);
        if n == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = self.pair(i, j);
                }
            });
        out
    }
}

/// Factorized adjacency gradient; see [`AdjacencyGradient`].
pub fn adjacency_gradient(ctx: &LossContext<'_>, params: &GcnParams) -> Result<AdjacencyGradient> {
    let bp = backprop(ctx, params)?;
    let n = ctx.normalized.n();
    let c = ctx.logits.cols();
    let h = ctx.pre_hidden.cols();
    // G = logit_grad · hidden_outᵀ + pre_hidden_grad · projectedᵀ
    let width = c + h;
    let mut left = DenseMat::zeros(n, width);
    let mut right = DenseMat::zeros(n, width);
    let mut active = vec![false; n];
    for (i, live) in active.iter_mut().enumerate() {
        let lrow = left.row_mut(i);
        lrow[..c].copy_from_slice(bp.logit_grad.row(i));
        lrow[c..].copy_from_slice(bp.pre_hidden_grad.row(i));
        *live = lrow.iter().any(|&v| v != 0.0);
        let rrow = right.row_mut(i);
        rrow[..c].copy_from_slice(ctx.hidden_out.row(i));
        rrow[c..].copy_from_slice(ctx.projected.row(i));
    }

    let mut acc = vec![0.0; n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let (cols, vals) = ctx.normalized.row(i);
        for (&l, &v) in cols.iter().zip(vals) {
            let g = dot(left.row(i), right.row(l)) * v;
            acc[i] += g;
            acc[l] += g;
        }
    }
    let delta: Vec<f64> = acc
        .iter()
        .zip(&ctx.degrees)
        .map(|(a, d)| -a / (2.0 * d))
        .collect();
    let inv_sqrt_degree = ctx.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(AdjacencyGradient {
        left,
        right,
        active,
        inv_sqrt_degree,
        delta,
    })
}

/// Dense symmetric `n × n` matrix of `∂L/∂A′`; for each pair `g_ij + g_ji` is
/// the derivative of a mirrored change. Needs `n²` memory; the attacks use
/// [`adjacency_gradient`] directly.
pub fn grad_adjacency(ctx: &LossContext<'_>, params: &GcnParams) -> Result<DenseMat> {
    Ok(adjacency_gradient(ctx, params)?.to_dense())
}

fn argmax_rows(logits: &DenseMat) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Predicted class per node on an arbitrary adjacency; ties go to the lowest class.
pub fn predict_on(params: &GcnParams, adj: &SparseSym, features: &DenseMat) -> Result<Vec<usize>> {
    let ctx = forward(adj, features, params, LossTarget::default())?;
    Ok(argmax_rows(&ctx.logits))
}

pub fn predict(params: &GcnParams, graph: &Graph) -> Result<Vec<usize>> {
    predict_on(params, graph.adjacency(), graph.features())
}

/// Test-set misclassification of `params` on `adj`.
pub fn misclassification(params: &GcnParams, graph: &Graph, adj: &SparseSym) -> Result<f64> {
    let preds = predict_on(params, adj, graph.features())?;
    Ok(graph.misclassification(&preds, graph.test()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Stop once validation loss exceeds the mean of this many previous epochs.
    pub early_stopping: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            early_stopping: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "learning rate must be > 0, weight decay >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state for one matrix.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut DenseMat, grad: &DenseMat, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((w, &g), m), v) in w
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn dropout_input<R: Rng>(x: &RowSparse, p: f64, rng: &mut R) -> RowSparse {
    let keep = 1.0 / (1.0 - p);
    let values = x
        .values()
        .iter()
        .map(|&v| if rng.gen::<f64>() < p { 0.0 } else { v * keep })
        .collect();
    x.with_values(values)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GcnParams,
    /// Training loss (with dropout and weight decay) per epoch.
    pub loss_trace: Vec<f64>,
}

/// Full-batch natural training with Adam, dropout and L2 on `W1`.
pub fn train_natural(graph: &Graph, config: &TrainConfig, seed: u64) -> Result<GcnParams> {
    Ok(train_natural_traced(graph, config, seed)?.params)
}

pub fn train_natural_traced(
    graph: &Graph,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if graph.train().is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = GcnParams::init(
        graph.feature_dim(),
        config.hidden,
        graph.class_count(),
        &mut rng,
    );
    let target = LossTarget::select(graph.train(), graph.labels());
    let val_target = LossTarget::select(graph.val(), graph.labels());
    let mut opt1 = Adam::new(params.w1.data().len());
    let mut opt2 = Adam::new(params.w2.data().len());
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut val_losses: Vec<f64> = Vec::new();
    let adj = graph.adjacency();
    let sparse_x = RowSparse::from_dense(graph.features());

    for _ in 0..config.epochs {
        let (x, scale) = if config.dropout > 0.0 {
            let x = dropout_input(&sparse_x, config.dropout, &mut rng);
            let keep = 1.0 / (1.0 - config.dropout);
            let scale: Vec<f64> = (0..graph.n() * config.hidden)
                .map(|_| {
                    if rng.gen::<f64>() < config.dropout {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect();
            (Cow::Owned(x), Some(scale))
        } else {
            (Cow::Borrowed(&sparse_x), None)
        };
        let projected = x.matmul(&params.w1)?;
        let ctx = forward_inner(
            adj,
            None,
            Cow::Owned(projected),
            &params,
            target.clone(),
            scale,
        )?;
        let l2 = 0.5 * params.w1.data().iter().map(|w| w * w).sum::<f64>();
        let loss = loss_ce(&ctx)? + config.weight_decay * l2;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss = {loss}")));
        }
        loss_trace.push(loss);
        let bp = backprop(&ctx, &params)?;
        let mut dw1 = x.t_matmul(&ctx.normalized.spmm(&bp.pre_hidden_grad)?)?;
        let dw2 = bp.dw2;
        dw1.axpy(config.weight_decay, &params.w1)?;
        opt1.step(&mut params.w1, &dw1, config.learning_rate);
        opt2.step(&mut params.w2, &dw2, config.learning_rate);
        if !params.is_finite() {
            return Err(Error::NonFinite("weights diverged".into()));
        }

        if let Some(window) = config.early_stopping {
            if val_target.is_empty() {
                continue;
            }
            let vctx = forward(adj, graph.features(), &params, val_target.clone())?;
            let vl = loss_ce(&vctx)?;
            if val_losses.len() >= window {
                let recent = &val_losses[val_losses.len() - window..];
                if vl > recent.iter().sum::<f64>() / window as f64 {
                    break;
                }
            }
            val_losses.push(vl);
        }
    }
    Ok(TrainOutcome { params, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::build_adjacency;

    fn target(nodes: &[usize], labels: &[usize]) -> LossTarget {
        LossTarget::new(nodes.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let adj = build_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let x = DenseMat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let p = GcnParams::new(DenseMat::zeros(2, 4), DenseMat::zeros(4, 7)).unwrap();
        let ctx = forward(&adj, &x, &p, target(&[0, 1, 2], &[0, 3, 6])).unwrap();
        assert!(ctx.logits.data().iter().all(|&v| v == 0.0));
        for i in 0..3 {
            for &q in ctx.probs.row(i) {
                assert!((q - 1.0 / 7.0).abs() < 1e-15);
            }
        }
        assert!((loss_ce(&ctx).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert_eq!(predict_on(&p, &adj, &x).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn edgeless_graph_is_an_mlp() {
        let adj = SparseSym::zeros(3);
        let x = DenseMat::from_rows(&[vec![1.0, -2.0], vec![0.5, 1.0], vec![-1.0, 3.0]]);
        let p = GcnParams::seeded(2, 3, 2, 9);
        let ctx = forward(&adj, &x, &p, LossTarget::default()).unwrap();
        let mlp = x
            .matmul(&p.w1)
            .unwrap()
            .map(|v| v.max(0.0))
            .matmul(&p.w2)
            .unwrap();
        assert_eq!(ctx.logits, mlp);
    }

    #[test]
    fn two_node_identity_weights() {
        let adj = build_adjacency(&[(0, 1)], 2).unwrap();
        let id = DenseMat::identity(2);
        let p = GcnParams::new(id.clone(), id.clone()).unwrap();
        let ctx = forward(&adj, &id, &p, LossTarget::default()).unwrap();
        assert_eq!(
            ctx.hidden,
            DenseMat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]])
        );
        assert_eq!(
            ctx.logits,
            DenseMat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]])
        );
    }

    /// Loss of a single isolated node whose logits equal `logits` (X = 1, W1 = 1, W2 = logits).
    fn single_node_loss(logits: Vec<f64>, label: usize) -> f64 {
        let adj = SparseSym::zeros(1);
        let x = DenseMat::from_rows(&[vec![1.0]]);
        let w1 = DenseMat::from_rows(&[vec![1.0]]);
        let w2 = DenseMat::from_rows(std::slice::from_ref(&logits));
        let p = GcnParams::new(w1, w2).unwrap();
        let ctx = forward(&adj, &x, &p, target(&[0], &[label])).unwrap();
        assert_eq!(ctx.logits.row(0), logits.as_slice());
        loss_ce(&ctx).unwrap()
    }

    #[test]
    fn cross_entropy_values() {
        let want = -(std::f64::consts::E / (std::f64::consts::E + 1.0)).ln();
        assert!((single_node_loss(vec![1.0, 0.0], 0) - want).abs() < 1e-12);
        assert!((want - 0.31326).abs() < 1e-5);

        let l = single_node_loss(vec![20.0, 0.0, 0.0], 0);
        assert!(l > 0.0 && l < 1e-8, "{l}");

        assert!((single_node_loss(vec![800.0, 0.0], 1) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_errors_and_gives_zero_gradient() {
        let adj = build_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let x = DenseMat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let p = GcnParams::seeded(2, 4, 2, 1);
        let ctx = forward(&adj, &x, &p, LossTarget::default()).unwrap();
        assert!(matches!(loss_ce(&ctx), Err(Error::EmptyMask)));
        let g = grad_adjacency(&ctx, &p).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_features_give_zero_w1_gradient() {
        let adj = build_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let x = DenseMat::zeros(3, 4);
        let p = GcnParams::seeded(4, 5, 3, 2);
        let ctx = forward(&adj, &x, &p, target(&[0, 2], &[1, 2])).unwrap();
        let (dw1, _) = grad_params(&ctx, &p).unwrap();
        assert!(dw1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let adj = build_adjacency(&[(0, 1)], 2).unwrap();
        let p = GcnParams::seeded(3, 4, 2, 0);
        assert!(forward(&adj, &DenseMat::zeros(2, 2), &p, LossTarget::default()).is_err());
        assert!(forward(&adj, &DenseMat::zeros(3, 3), &p, LossTarget::default()).is_err());
        assert!(forward(&adj, &DenseMat::zeros(2, 3), &p, target(&[5], &[0])).is_err());
        assert!(forward(&adj, &DenseMat::zeros(2, 3), &p, target(&[0], &[2])).is_err());
        let x = DenseMat::zeros(2, 3);
        let ctx = forward(&adj, &x, &p, target(&[0], &[1])).unwrap();
        let other = GcnParams::seeded(3, 5, 2, 0);
        assert!(grad_params(&ctx, &other).is_err());
        assert!(GcnParams::new(DenseMat::zeros(3, 4), DenseMat::zeros(5, 2)).is_err());
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let adj = build_adjacency(&[(0, 1), (1, 2), (0, 3)], 4).unwrap();
        let x = DenseMat::from_rows(&[
            vec![0.1, 0.2],
            vec![0.3, -0.4],
            vec![0.5, 0.6],
            vec![-0.7, 0.8],
        ]);
        let p = GcnParams::seeded(2, 6, 3, 5);
        let a = forward(&adj, &x, &p, target(&[0, 1], &[0, 2])).unwrap();
        let b = forward(&adj, &x, &p, target(&[0, 1], &[0, 2])).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.probs, b.probs);
        let ga = grad_adjacency(&a, &p).unwrap();
        let gb = grad_adjacency(&b, &p).unwrap();
        assert_eq!(ga, gb);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(ga.get(i, j).to_bits(), ga.get(j, i).to_bits());
            }
            let s: f64 = a.probs.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let adj = build_adjacency(&[(0, 1)], 2).unwrap();
        let g = Graph::new(adj, DenseMat::identity(2), vec![0, 1], 2)
            .unwrap()
            .with_splits(crate::data::Splits {
                train: vec![0, 1],
                ..Default::default()
            })
            .unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let p = train_natural(&g, &cfg, 11).unwrap();
        assert_eq!(p, GcnParams::seeded(2, 16, 2, 11));
        assert!(train_natural(
            &g,
            &TrainConfig {
                dropout: 1.0,
                ..cfg
            },
            0
        )
        .is_err());
    }
}
