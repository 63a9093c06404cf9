//! Graph datasets: the in-memory [`Graph`], the neutral on-disk format, and
//! seeded transductive splits.
//!
//! On-disk layout of a dataset directory:
//!
//! ```text
//! manifest.json   counts + SHA-256 of every data file
//! edges.txt       "u v" per line, 0-indexed, u < v, sorted, LF-terminated
//! features.bin    n x F little-endian f32, row-major
//! labels.txt      one class index per line, n lines
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gcn::{predict, GcnParams};
use crate::sparse::{build_adjacency, DenseMat, SparseSym};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";

/// Disjoint node index sets, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Node-classification graph. `splits` may be empty until [`make_splits`] runs.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: SparseSym,
    features: DenseMat,
    labels: Vec<usize>,
    class_count: usize,
    splits: Splits,
}

impl Graph {
    pub fn new(
        adjacency: SparseSym,
        features: DenseMat,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let n = adjacency.n();
        if features.rows() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "graph with {n} nodes has {} feature rows and {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            class_count,
            splits: Splits::default(),
        })
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        validate_splits(&splits, self.n())?;
        self.splits = splits;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn adjacency(&self) -> &SparseSym {
        &self.adjacency
    }

    pub fn features(&self) -> &DenseMat {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn train(&self) -> &[usize] {
        &self.splits.train
    }

    pub fn val(&self) -> &[usize] {
        &self.splits.val
    }

    pub fn test(&self) -> &[usize] {
        &self.splits.test
    }

    /// Fraction of `nodes` whose prediction differs from the ground truth.
    pub fn misclassification(&self, predictions: &[usize], nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let wrong = nodes
            .iter()
            .filter(|&&v| predictions[v] != self.labels[v])
            .count();
        wrong as f64 / nodes.len() as f64
    }
}

fn validate_splits(splits: &Splits, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for set in [&splits.train, &splits.val, &splits.test] {
        for &v in set {
            if v >= n {
                return Err(Error::OutOfRange { index: v, n });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Split(format!("node {v} appears in two masks")));
            }
        }
    }
    Ok(())
}

/// Seeded class-balanced transductive split: `train_per_class` labeled nodes
/// per class, then `val` and `test` nodes drawn from the remainder.
pub fn make_splits(graph: &Graph, seed: u64, sizes: SplitSizes) -> Result<Splits> {
    let mut order: Vec<usize> = (0..graph.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut taken = vec![0usize; graph.class_count()];
    let mut train = Vec::new();
    let mut rest = Vec::with_capacity(order.len());
    for v in order {
        let c = graph.labels()[v];
        if taken[c] < sizes.train_per_class {
            taken[c] += 1;
            train.push(v);
        } else {
            rest.push(v);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < sizes.train_per_class) {
        return Err(Error::Split(format!(
            "class {c} has only {} nodes, {} requested for training",
            taken[c], sizes.train_per_class
        )));
    }
    if rest.len() < sizes.val + sizes.test {
        return Err(Error::Split(format!(
            "{} nodes remain after training split, {} needed for val+test",
            rest.len(),
            sizes.val + sizes.test
        )));
    }
    let mut val = rest[..sizes.val].to_vec();
    let mut test = rest[sizes.val..sizes.val + sizes.test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}

/// Ground truth on the training nodes, the model's predictions everywhere else.
pub fn pseudo_labels(graph: &Graph, natural: &GcnParams) -> Result<Vec<usize>> {
    let mut labels = predict(natural, graph)?;
    for &v in graph.train() {
        labels[v] = graph.labels()[v];
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub edges: FileRef,
    pub features: FileRef,
    pub labels: FileRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<FileRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub edge_count: usize,
    pub feature_dim: usize,
    pub class_count: usize,
    pub files: DatasetFiles,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read(&path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path, source })
}

/// Loads and validates a dataset directory. The graph carries splits only when
/// the manifest lists a splits file.
pub fn load_dataset(dir: &Path) -> Result<Graph> {
    if !dir.is_dir() {
        return Err(Error::dataset(dir, "dataset directory does not exist"));
    }
    let manifest = read_manifest(dir)?;
    let load = |f: &FileRef| -> Result<(PathBuf, Vec<u8>)> {
        let path = dir.join(&f.path);
        let bytes = read(&path)?;
        let got = sha256_hex(&bytes);
        if got != f.sha256 {
            return Err(Error::dataset(
                &path,
                format!("checksum mismatch: manifest {} file {got}", f.sha256),
            ));
        }
        Ok((path, bytes))
    };
    let n = manifest.n;

    let (path, bytes) = load(&manifest.files.edges)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::dataset(&path, "not UTF-8"))?;
    let mut edges = Vec::with_capacity(manifest.edge_count);
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_ascii_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(u)), Some(Ok(v)), None) => {
                if u == v {
                    return Err(Error::dataset(
                        &path,
                        format!("line {}: self-loop at node {u}", lineno + 1),
                    ));
                }
                edges.push((u, v));
            }
            _ => {
                return Err(Error::dataset(
                    &path,
                    format!("line {}: expected `u v`", lineno + 1),
                ))
            }
        }
    }
    let adjacency = build_adjacency(&edges, n).map_err(|e| Error::dataset(&path, e.to_string()))?;
    if adjacency.edge_count() != manifest.edge_count {
        return Err(Error::dataset(
            &path,
            format!(
                "manifest declares {} edges, file holds {} distinct edges",
                manifest.edge_count,
                adjacency.edge_count()
            ),
        ));
    }

    let (path, bytes) = load(&manifest.files.features)?;
    let expected = n * manifest.feature_dim * 4;
    if bytes.len() != expected {
        return Err(Error::dataset(
            &path,
            format!(
                "expected {expected} bytes for {n}x{} f32, found {}",
                manifest.feature_dim,
                bytes.len()
            ),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let features = DenseMat::from_vec(n, manifest.feature_dim, values)
        .map_err(|e| Error::dataset(&path, e.to_string()))?;

    let (path, bytes) = load(&manifest.files.labels)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::dataset(&path, "not UTF-8"))?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let l: usize = line.trim().parse().map_err(|_| {
            Error::dataset(&path, format!("line {}: not a class index", lineno + 1))
        })?;
        if l >= manifest.class_count {
            return Err(Error::dataset(
                &path,
                format!(
                    "line {}: label {l} outside [0, {})",
                    lineno + 1,
                    manifest.class_count
                ),
            ));
        }
        labels.push(l);
    }
    if labels.len() != n {
        return Err(Error::dataset(
            &path,
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }

    let mut graph = Graph::new(adjacency, features, labels, manifest.class_count)?;
    if let Some(f) = &manifest.files.splits {
        let (path, bytes) = load(f)?;
        let splits: Splits =
            serde_json::from_slice(&bytes).map_err(|source| Error::Json { path, source })?;
        graph = graph.with_splits(splits)?;
    }
    Ok(graph)
}

/// Serializes `graph` into `dir` and returns the manifest written. Features are
/// narrowed to f32; values that are exactly representable round-trip bit-exactly.
pub fn save_dataset(graph: &Graph, name: &str, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    for (u, v) in graph.adjacency().upper_edges() {
        edges.push_str(&format!("{u} {v}\n"));
    }
    let mut features = Vec::with_capacity(graph.features().data().len() * 4);
    for &v in graph.features().data() {
        features.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut labels = String::new();
    for l in graph.labels() {
        labels.push_str(&format!("{l}\n"));
    }
    let emit = |file: &str, bytes: &[u8]| -> Result<FileRef> {
        write(&dir.join(file), bytes)?;
        Ok(FileRef {
            path: file.to_string(),
            sha256: sha256_hex(bytes),
        })
    };
    let manifest = DatasetManifest {
        name: name.to_string(),
        n: graph.n(),
        edge_count: graph.adjacency().edge_count(),
        feature_dim: graph.feature_dim(),
        class_count: graph.class_count(),
        files: DatasetFiles {
            edges: emit(EDGES_FILE, edges.as_bytes())?,
            features: emit(FEATURES_FILE, &features)?,
            labels: emit(LABELS_FILE, labels.as_bytes())?,
            splits: None,
        },
        warnings: Vec::new(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}
