// SPDX-License-Identifier: Apache-2.0

//! Trojan-balanced mini-batches: the normal nodes are split into `m` random
//! parts and every part is paired with all Trojan nodes.

use std::borrow::Cow;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eaug::{Eaug, EaugError};
use crate::features::FeatureMatrix;
use crate::Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("number of batches must be at least 1, got {0}")]
    InvalidM(usize),
    #[error("node {0} is in both the Trojan and the normal set")]
    OverlappingSets(usize),
    #[error("feature matrix has {features} rows but the graph has {nodes} nodes")]
    Misaligned { features: usize, nodes: usize },
    #[error(transparent)]
    Graph(#[from] EaugError),
}

/// Which graph a batch's forward pass runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BatchContext {
    /// Subgraph induced by the batch nodes.
    #[default]
    Induced,
    /// Whole graph; only the batch nodes contribute to the loss.
    Full,
}

impl std::str::FromStr for BatchContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "induced" => Ok(BatchContext::Induced),
            "full" => Ok(BatchContext::Full),
            _ => Err(format!("unknown batch context `{s}` (expected induced or full)")),
        }
    }
}

/// Splits `v_n` into `m` random parts of near-equal size (each at most
/// `ceil(|v_n| / m)`) and returns `part_i ∪ v_t` for each part, sorted.
pub fn trojan_sampling(v_t: &[usize], v_n: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>, SamplerError> {
    if m < 1 {
        return Err(SamplerError::InvalidM(m));
    }
    let trojans: HashSet<usize> = v_t.iter().copied().collect();
    if let Some(&v) = v_n.iter().find(|v| trojans.contains(v)) {
        return Err(SamplerError::OverlappingSets(v));
    }
    let mut normals = v_n.to_vec();
    normals.shuffle(rng);
    let (base, extra) = (normals.len() / m, normals.len() % m);
    let mut start = 0;
    Ok((0..m)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let mut batch: Vec<usize> = normals[start..start + len].iter().chain(v_t).copied().collect();
            start += len;
            batch.sort_unstable();
            batch
        })
        .collect())
}

/// One training batch.
#[derive(Debug, Clone)]
pub struct MiniBatch<'a> {
    /// Parent indices of `V_n^(i) ∪ V_t`, sorted.
    pub node_set: Vec<usize>,
    pub graph: Cow<'a, Eaug>,
    pub features: Cow<'a, FeatureMatrix>,
    /// Rows of `graph` that contribute to the loss, aligned with `labels`.
    pub loss_nodes: Vec<usize>,
    /// One-hot targets: Normal `(1, 0)`, Trojan `(0, 1)`.
    pub labels: Vec<[f64; 2]>,
}

pub fn one_hot(trojan: bool) -> [f64; 2] {
    if trojan {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

/// Samples node sets and materializes one batch per set.
pub fn make_batches<'a>(
    g: &'a Eaug,
    fm: &'a FeatureMatrix,
    m: usize,
    context: BatchContext,
    rng: &mut Rng,
) -> Result<Vec<MiniBatch<'a>>, SamplerError> {
    if fm.rows() != g.node_count() {
        return Err(SamplerError::Misaligned { features: fm.rows(), nodes: g.node_count() });
    }
    let sets = trojan_sampling(&g.trojan_nodes(), &g.normal_nodes(), m, rng)?;
    sets.into_iter()
        .map(|node_set| {
            let labels = node_set.iter().map(|&v| one_hot(g.labels()[v].is_trojan())).collect();
            Ok(match context {
                BatchContext::Induced => {
                    let (sub, _) = g.induced_subgraph(&node_set)?;
                    MiniBatch {
                        graph: Cow::Owned(sub),
                        features: Cow::Owned(fm.select(&node_set)),
                        loss_nodes: (0..node_set.len()).collect(),
                        labels,
                        node_set,
                    }
                }
                BatchContext::Full => MiniBatch {
                    graph: Cow::Borrowed(g),
                    features: Cow::Borrowed(fm),
                    loss_nodes: node_set.clone(),
                    labels,
                    node_set,
                },
            })
        })
        .collect()
}
