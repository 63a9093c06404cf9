//! Fixtures shared by the kernel benchmarks in `benches/`.

use gta_core::synthetic::{generate, DatasetProfile};
use gta_core::{make_splits, GcnParams, Graph, LossTarget, SplitSizes};

pub struct Setup {
    pub graph: Graph,
    pub params: GcnParams,
    pub target: LossTarget,
}

/// A synthetic graph for `profile` with a split and Glorot weights. The
/// weights are untrained: kernel cost does not depend on their values.
pub fn setup(profile: &str) -> Setup {
    let p = DatasetProfile::by_name(profile).expect("known profile");
    let graph = generate(&p, 0).unwrap();
    let splits = make_splits(&graph, 0, SplitSizes::default()).unwrap();
    let graph = graph.with_splits(splits).unwrap();
    let params = GcnParams::seeded(graph.feature_dim(), 16, graph.class_count(), 0);
    let target = LossTarget::select(graph.test(), graph.labels());
    Setup {
        graph,
        params,
        target,
    }
}
