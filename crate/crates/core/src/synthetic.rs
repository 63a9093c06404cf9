//! Seeded synthetic citation-style graphs for fixtures, tests and benchmarks.
//!
//! Edges come from a degree-corrected stochastic block model: endpoint weights
//! follow a Pareto law (heavy-tailed degrees, every node has at least one
//! edge) and each edge stays inside one class with probability `homophily`.
//! Features are binary bag-of-words: each node draws words from its class
//! topic with probability `topic_purity`, otherwise from the full vocabulary.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::sparse::{build_adjacency, DenseMat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    /// Nodes per class; sums to `nodes`.
    pub class_sizes: Vec<usize>,
    pub homophily: f64,
    pub words_per_node: usize,
    pub topic_words: usize,
    pub topic_purity: f64,
    pub degree_exponent: f64,
}

impl DatasetProfile {
    /// Cora-sized: 2708 nodes, 5429 edges, 7 classes, 1433 features.
    pub fn cora() -> Self {
        Self {
            name: "cora".into(),
            nodes: 2708,
            edges: 5429,
            features: 1433,
            class_sizes: vec![351, 217, 418, 818, 426, 298, 180],
            homophily: 0.7,
            words_per_node: 18,
            topic_words: 120,
            topic_purity: 0.3,
            degree_exponent: 2.5,
        }
    }

    /// Citeseer-sized: 3327 nodes, 4732 edges, 6 classes, 3703 features.
    pub fn citeseer() -> Self {
        Self {
            name: "citeseer".into(),
            nodes: 3327,
            edges: 4732,
            features: 3703,
            class_sizes: vec![264, 590, 668, 701, 596, 508],
            homophily: 0.6,
            words_per_node: 32,
            topic_words: 250,
            topic_purity: 0.3,
            degree_exponent: 2.5,
        }
    }

    /// Pubmed-sized: 19717 nodes, 44338 edges, 3 classes, 500 features.
    pub fn pubmed() -> Self {
        Self {
            name: "pubmed".into(),
            nodes: 19717,
            edges: 44338,
            features: 500,
            class_sizes: vec![4103, 7739, 7875],
            homophily: 0.73,
            words_per_node: 50,
            topic_words: 60,
            topic_purity: 0.14,
            degree_exponent: 2.5,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "cora" => Some(Self::cora()),
            "citeseer" => Some(Self::citeseer()),
            "pubmed" => Some(Self::pubmed()),
            _ => None,
        }
    }

    /// Small graph for unit tests.
    pub fn toy(nodes: usize, classes: usize, edges: usize, features: usize) -> Self {
        let base = nodes / classes;
        let mut class_sizes = vec![base; classes];
        class_sizes[0] += nodes - base * classes;
        Self {
            name: format!("toy-{nodes}"),
            nodes,
            edges,
            features,
            class_sizes,
            homophily: 0.8,
            words_per_node: (features / 4).max(1),
            topic_words: (features / classes).max(1),
            topic_purity: 0.6,
            degree_exponent: 2.5,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_sizes.len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("profile `{}`: {m}", self.name)));
        if self.class_sizes.iter().sum::<usize>() != self.nodes {
            return bad("class sizes do not sum to the node count");
        }
        if self.class_sizes.iter().any(|&s| s < 2) {
            return bad("every class needs at least two nodes");
        }
        if self.edges > self.nodes * (self.nodes - 1) / 4 {
            return bad("too many edges for the node count");
        }
        if [self.homophily, self.topic_purity]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("homophily and purity must lie in [0, 1]");
        }
        if self.features == 0 || self.topic_words == 0 || self.topic_words > self.features {
            return bad("topic vocabulary must be a nonempty subset of the features");
        }
        if !(self.degree_exponent > 1.0) {
            return bad("degree exponent must exceed 1");
        }
        Ok(())
    }
}

struct EdgeSampler {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    within: Vec<WeightedIndex<f64>>,
    class_pick: WeightedIndex<f64>,
    class_weight: Vec<f64>,
    homophily: f64,
}

impl EdgeSampler {
    fn partner<R: Rng>(&self, u: usize, rng: &mut R) -> usize {
        let c = self.labels[u];
        let class = if self.members.len() == 1 || rng.gen::<f64>() < self.homophily {
            c
        } else {
            loop {
                let k = self.class_pick.sample(rng);
                if k != c && self.class_weight[k] > 0.0 {
                    break k;
                }
            }
        };
        self.members[class][self.within[class].sample(rng)]
    }
}

pub fn generate(profile: &DatasetProfile, seed: u64) -> Result<Graph> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = profile.nodes;
    let classes = profile.class_count();

    let mut labels: Vec<usize> = profile
        .class_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    labels.shuffle(&mut rng);

    let cap = (n as f64).sqrt() * 2.0;
    let theta: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            (1.0 - u)
                .powf(-1.0 / (profile.degree_exponent - 1.0))
                .min(cap)
        })
        .collect();
    let mut members = vec![Vec::new(); classes];
    for (v, &c) in labels.iter().enumerate() {
        members[c].push(v);
    }
    let within = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&v| theta[v])).expect("positive weights"))
        .collect();
    let class_weight: Vec<f64> = members
        .iter()
        .map(|m| m.iter().map(|&v| theta[v]).sum())
        .collect();
    let sampler = EdgeSampler {
        class_pick: WeightedIndex::new(&class_weight).expect("positive weights"),
        labels: labels.clone(),
        members,
        within,
        class_weight,
        homophily: profile.homophily,
    };
    let overall = WeightedIndex::new(&theta).expect("positive weights");

    let mut present = std::collections::HashSet::with_capacity(profile.edges * 2);
    let mut edges = Vec::with_capacity(profile.edges);
    let mut degree = vec![0usize; n];
    let mut add = |u: usize, v: usize, edges: &mut Vec<(usize, usize)>, degree: &mut [usize]| {
        if u != v {
            let p = (u.min(v), u.max(v));
            if present.insert(p) {
                edges.push(p);
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &u in &order {
        if edges.len() >= profile.edges {
            break;
        }
        while degree[u] == 0 {
            let v = sampler.partner(u, &mut rng);
            add(u, v, &mut edges, &mut degree);
        }
    }
    while edges.len() < profile.edges {
        let u = overall.sample(&mut rng);
        let v = sampler.partner(u, &mut rng);
        add(u, v, &mut edges, &mut degree);
    }
    let adjacency = build_adjacency(&edges, n)?;

    let topics: Vec<Vec<usize>> = (0..classes)
        .map(|_| {
            let mut vocab: Vec<usize> = (0..profile.features).collect();
            vocab.shuffle(&mut rng);
            vocab.truncate(profile.topic_words);
            vocab
        })
        .collect();
    let mut features = DenseMat::zeros(n, profile.features);
    let w = profile.words_per_node;
    for v in 0..n {
        let count = rng.gen_range(w.div_ceil(2)..=w + w / 2);
        let topic = &topics[labels[v]];
        let row = features.row_mut(v);
        for _ in 0..count {
            let word = if rng.gen::<f64>() < profile.topic_purity {
                topic[rng.gen_range(0..topic.len())]
            } else {
                rng.gen_range(0..profile.features)
            };
            row[word] = 1.0;
        }
    }
    Graph::new(adjacency, features, labels, classes)
}
