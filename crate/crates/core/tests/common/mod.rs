//! Dense reference GCN and finite-difference helpers, independent of the
//! sparse implementation under test.

#![allow(dead_code)]

use gta_core::{build_adjacency, DenseMat, GcnParams, Graph, LossTarget, SparseSym, Splits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &DenseMat) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let k = b.len();
    let c = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..c)
                .map(|j| (0..k).map(|t| row[t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub struct DenseForward {
    pub pre_hidden: Dense,
    pub logits: Dense,
}

/// `Ã · ReLU(Ã X W1) · W2` with `Ã` built from a real-valued dense `A`.
pub fn dense_forward(a: &Dense, x: &Dense, w1: &Dense, w2: &Dense) -> DenseForward {
    let n = a.len();
    let mut hat = a.clone();
    for (i, row) in hat.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = hat.iter().map(|r| r.iter().sum()).collect();
    let norm: Dense = (0..n)
        .map(|i| (0..n).map(|j| hat[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect();
    let pre_hidden = matmul(&norm, &matmul(x, w1));
    let hidden: Dense = pre_hidden
        .iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let logits = matmul(&norm, &matmul(&hidden, w2));
    DenseForward { pre_hidden, logits }
}

pub fn dense_loss(logits: &Dense, nodes: &[usize], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (&v, &l) in nodes.iter().zip(labels) {
        let row = &logits[v];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - row[l];
    }
    total / nodes.len() as f64
}

pub fn relu_pattern(f: &DenseForward) -> Vec<bool> {
    f.pre_hidden.iter().flatten().map(|&v| v > 0.0).collect()
}

/// Relative error with a floor: below 1e-5 the O(ε²) truncation of a central
/// difference dominates, so tiny derivatives are compared absolutely.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / got.abs().max(want.abs()).max(1e-5)
}

pub struct Case {
    pub graph: Graph,
    pub params: GcnParams,
    pub target: LossTarget,
}

/// Random graph with `n ≤ 8` nodes, random features, weights and loss target.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=8);
    let f = rng.gen_range(2..=5);
    let h = rng.gen_range(2..=6);
    let c = rng.gen_range(2..=4);
    let p = rng.gen_range(0.2..0.7);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let adj = build_adjacency(&edges, n).unwrap();
    let x =
        DenseMat::from_vec(n, f, (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut nodes: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < 0.6).collect();
    if nodes.is_empty() {
        nodes.push(0);
    }
    let graph = Graph::new(adj, x, labels.clone(), c)
        .unwrap()
        .with_splits(Splits {
            train: nodes.clone(),
            val: vec![],
            test: (0..n).filter(|v| !nodes.contains(v)).collect(),
        })
        .unwrap();
    let mut params = GcnParams::seeded(f, h, c, seed ^ 0xABCD);
    // larger weights than Glorot so the loss surface has curvature
    params.w1 = params.w1.map(|v| 2.0 * v);
    params.w2 = params.w2.map(|v| 2.0 * v);
    let target = LossTarget::select(&nodes, &labels);
    Case {
        graph,
        params,
        target,
    }
}

pub struct PairFd {
    pub pair: (usize, usize),
    pub derivative: f64,
    /// ReLU pattern identical at both probes, so the central difference is valid.
    pub smooth: bool,
}

/// Central difference of the loss under a mirrored change of `A_ij` and `A_ji`.
pub fn pair_fd(case: &Case, adj: &SparseSym, i: usize, j: usize, eps: f64) -> PairFd {
    let a = to_dense(&adj.to_dense());
    let x = to_dense(case.graph.features());
    let w1 = to_dense(&case.params.w1);
    let w2 = to_dense(&case.params.w2);
    let probe = |delta: f64| {
        let mut m = a.clone();
        m[i][j] += delta;
        m[j][i] += delta;
        dense_forward(&m, &x, &w1, &w2)
    };
    let (plus, minus) = (probe(eps), probe(-eps));
    let nodes = case.target.nodes();
    let labels = case.target.labels();
    let derivative = (dense_loss(&plus.logits, nodes, labels)
        - dense_loss(&minus.logits, nodes, labels))
        / (2.0 * eps);
    PairFd {
        pair: (i, j),
        derivative,
        smooth: relu_pattern(&plus) == relu_pattern(&minus),
    }
}

/// Central difference of the loss with respect to one weight entry.
pub fn weight_fd(case: &Case, layer: usize, r: usize, c: usize, eps: f64) -> (f64, bool) {
    let a = to_dense(&case.graph.adjacency().to_dense());
    let x = to_dense(case.graph.features());
    let probe = |delta: f64| {
        let mut w1 = to_dense(&case.params.w1);
        let mut w2 = to_dense(&case.params.w2);
        if layer == 1 {
            w1[r][c] += delta;
        } else {
            w2[r][c] += delta;
        }
        dense_forward(&a, &x, &w1, &w2)
    };
    let (plus, minus) = (probe(eps), probe(-eps));
    let nodes = case.target.nodes();
    let labels = case.target.labels();
    let d = (dense_loss(&plus.logits, nodes, labels) - dense_loss(&minus.logits, nodes, labels))
        / (2.0 * eps);
    (d, relu_pattern(&plus) == relu_pattern(&minus))
}

/// Pairs attaining the maximum of the finite-difference coupled score
/// `(1 − 2A_ij) · ∂L/∂{ij}` over all upper-triangle pairs, in lexicographic
/// order. Scores within finite-difference noise of the best count as ties.
pub fn fd_greedy_choice(case: &Case, eps: f64) -> (Vec<(usize, usize)>, Vec<PairFd>) {
    let adj = case.graph.adjacency();
    let n = adj.n();
    let mut all = Vec::new();
    let mut scores = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let fd = pair_fd(case, adj, i, j, eps);
            let sign = if adj.contains(i, j) { -1.0 } else { 1.0 };
            scores.push(((i, j), sign * fd.derivative));
            all.push(fd);
        }
    }
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * best.abs().max(1.0);
    let tied = scores
        .iter()
        .filter(|s| s.1 >= best - tol)
        .map(|s| s.0)
        .collect();
    (tied, all)
}
