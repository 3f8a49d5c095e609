//! Loading and validating the inputs a router is built from.

mod activations;
mod labels;
mod pool;
mod split;

pub use activations::{
    load_activation_store, read_matrix_file, upper_half_start, write_activation_store,
    write_matrix_file, ActivationManifest, ActivationStore, MatrixEntry, MatrixHeader, MatrixKey,
    Pooling, MANIFEST_FILE,
};
pub use labels::{consensus_regime, load_labels, LabelRow, LabelTable, Regime};
pub use pool::{load_pool, ModelPool, ModelSpec};
pub use split::{stratified_split, SplitAssignment, SplitFractions};
