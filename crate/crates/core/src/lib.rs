// SPDX-License-Identifier: Apache-2.0

//! Node-wise hardware Trojan detection for gate-level netlists.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`netlist`] parses structural Verilog or canonical graph JSON into a
//!    [`Netlist`](netlist::Netlist) and attaches normal/Trojan labels.
//! 2. [`eaug`] turns the netlist into an edge-attributed undirected graph in
//!    which each wire contributes a forward and a backward edge.
//! 3. [`features`] computes the per-node initial feature vectors (degrees,
//!    cell-type one-hot, distances to the ports, static probabilities).
//! 4. [`sampler`] and [`gnn`] train an edge-aware GNN with Trojan-balanced
//!    mini-batches, and [`gnn::detect`] classifies every node.
//! 5. [`eval`] computes confusion counts and metrics, leave-one-out
//!    cross-validation and grid search.
//!
//! [`htgen`] generates synthetic Trojan-infested netlists with ground-truth
//! labels, and [`sim`] is the bit-parallel logic simulator it uses for
//! equivalence checking.

pub mod eaug;
pub mod eval;
pub mod features;
pub mod gnn;
pub mod htgen;
pub mod netlist;
pub mod sampler;
pub mod sim;

pub use eaug::{EdgeDir, Eaug};
pub use features::{FeatureMatrix, FeatureMode};
pub use gnn::{LayerKind, ModelConfig, TrainedModel};
pub use netlist::{CellLibrary, Label, Netlist};

/// Seeded generator used everywhere randomness is involved.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer), used to give
/// folds, grid cells and generated samples independent seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
