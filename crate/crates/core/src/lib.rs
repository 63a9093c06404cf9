//! Topology attacks on graph convolutional networks and adversarial training
//! against them.
//!
//! - [`sparse`]: symmetric CSR adjacency, normalization, sparse-dense products.
//! - [`gcn`]: two-layer GCN, cross-entropy, weight and adjacency gradients.
//! - [`attack`]: greedy (GTA), zeroth-order (ZO-GTA) and DICE attacks.
//! - [`robust`]: min-max training with a pluggable inner attack.
//! - [`data`]: datasets, the neutral on-disk format, splits, pseudo-labels.
//! - [`synthetic`]: seeded citation-style graph generator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod robust;
pub mod sparse;
pub mod stats;
pub mod synthetic;

pub use attack::{
    dice, gta, score_matrix, zo_gta, AttackBudget, AttackInput, AttackMethod, AttackReport,
    PerturbationSet, TopologyAttack,
};
pub use data::{load_dataset, make_splits, pseudo_labels, save_dataset, Graph, SplitSizes, Splits};
pub use error::{Error, Result};
pub use gcn::{
    forward, grad_adjacency, grad_params, loss_ce, predict, train_natural, GcnParams, LossContext,
    LossTarget, TrainConfig,
};
pub use robust::{evaluate_robustness, robust_train, InnerAttack, RobustTrainConfig};
pub use sparse::{build_adjacency, normalize_adjacency, DenseMat, RowSparse, SparseSym};
pub use stats::Summary;
