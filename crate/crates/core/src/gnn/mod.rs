// SPDX-License-Identifier: Apache-2.0

//! Edge-aware GNN engine: layers, loss, reverse-mode gradients, Adam,
//! the Trojan-sampled training loop, detection and checkpoints.

mod adam;
mod checkpoint;
pub mod matrix;
pub mod model;
pub mod tape;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eaug::Eaug;
use crate::features::{apply_stats, FeatureError, FeatureMatrix, FeatureMode, FeatureStats};
use crate::netlist::Label;
use crate::sampler::{BatchContext, SamplerError};

pub use adam::Adam;
pub use checkpoint::CHECKPOINT_VERSION;
pub use matrix::Matrix;
pub use model::{forward, init_params, loss_and_gradients, param_shapes, Params};
pub use train::{train, EarlyStopping, TrainReport};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in epoch {epoch}")]
    NaNGradient { epoch: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("model expects {expected:?} features, got {found:?}")]
    FeatureModeMismatch { expected: FeatureMode, found: FeatureMode },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    #[default]
    Gat,
    Mpnn,
    Gin,
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gat" => Ok(LayerKind::Gat),
            "mpnn" => Ok(LayerKind::Mpnn),
            "gin" => Ok(LayerKind::Gin),
            _ => Err(format!("unknown model `{s}` (expected gat, mpnn or gin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub hidden_units: usize,
    pub feature_mode: FeatureMode,
    /// Number of mini-batches `m` per graph and epoch.
    pub num_batches: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_context: BatchContext,
    /// Draw a fresh normal-node partition every epoch; otherwise the first
    /// partition is reused.
    pub resample_each_epoch: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layer_kind: LayerKind::Gat,
            num_layers: 3,
            hidden_units: 16,
            feature_mode: FeatureMode::Netlist46,
            num_batches: 20,
            lr: 0.1,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
            batch_context: BatchContext::Induced,
            resample_each_epoch: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GnnError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.num_layers == 0 || self.hidden_units == 0 {
            return Err(GnnError::Config("layers and units must be at least 1".into()));
        }
        if self.num_batches == 0 {
            return Err(GnnError::Sampler(SamplerError::InvalidM(0)));
        }
        Ok(())
    }
}

/// Weights, architecture and the feature statistics they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: Params,
    pub feature_stats: Option<FeatureStats>,
}

/// Per-node classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub labels: Vec<Label>,
    /// `[p_normal, p_trojan]` per node.
    pub probs: Vec<[f64; 2]>,
}

impl Detection {
    pub fn trojan_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_trojan()).count()
    }
}

pub(crate) fn to_matrix(fm: &FeatureMatrix) -> Matrix {
    Matrix::from_vec(fm.rows(), fm.dim(), fm.values().to_vec())
}

impl TrainedModel {
    /// Freshly initialized model.
    pub fn init(config: ModelConfig, feature_stats: Option<FeatureStats>) -> TrainedModel {
        let params = init_params(&config, config.feature_mode.dim());
        TrainedModel { config, params, feature_stats }
    }

    /// Raw features get the stored statistics applied; standardized ones are
    /// used as given.
    fn prepare(&self, fm: &FeatureMatrix) -> Result<Matrix, GnnError> {
        if fm.mode != self.config.feature_mode {
            return Err(GnnError::FeatureModeMismatch { expected: self.config.feature_mode, found: fm.mode });
        }
        match (&self.feature_stats, fm.is_standardized()) {
            (Some(stats), false) => Ok(to_matrix(&apply_stats(fm, stats)?)),
            _ => Ok(to_matrix(fm)),
        }
    }

    /// Encoder output `h^(L)` for every node.
    pub fn embeddings(&self, g: &Eaug, fm: &FeatureMatrix) -> Result<Matrix, GnnError> {
        let x = self.prepare(fm)?;
        let f = forward(&self.config, &self.params, g, &x)?;
        Ok(f.tape.value(f.embeddings).clone())
    }

    /// Classifies every node of the full graph; `p_trojan >= p_normal` is
    /// Trojan.
    pub fn detect(&self, g: &Eaug, fm: &FeatureMatrix) -> Result<Detection, GnnError> {
        let x = self.prepare(fm)?;
        let f = forward(&self.config, &self.params, g, &x)?;
        let p = f.tape.value(f.probs);
        let probs: Vec<[f64; 2]> = (0..p.rows()).map(|i| [p.get(i, 0), p.get(i, 1)]).collect();
        let labels = probs
            .iter()
            .map(|q| if q[1] >= q[0] { Label::Trojan } else { Label::Normal })
            .collect();
        Ok(Detection { labels, probs })
    }

    /// Attention coefficients of GAT layer `layer` as `(dst, src, α)`
    /// triples, self entries first.
    pub fn attention(&self, g: &Eaug, fm: &FeatureMatrix, layer: usize) -> Result<Vec<(usize, usize, f64)>, GnnError> {
        if self.config.layer_kind != LayerKind::Gat || layer >= self.config.num_layers {
            return Err(GnnError::Config(format!("no attention layer {layer}")));
        }
        let x = self.prepare(fm)?;
        let f = forward(&self.config, &self.params, g, &x)?;
        let gi = model::GraphIndex::new(g);
        let alpha = f.tape.value(f.attention[layer]);
        Ok((0..alpha.rows()).map(|k| (gi.att_dst[k], gi.att_src[k], alpha.get(k, 0))).collect())
    }

    pub fn tensors(&self) -> &BTreeMap<String, Matrix> {
        &self.params.tensors
    }
}

/// Free-function form of [`TrainedModel::detect`].
pub fn detect(model: &TrainedModel, g: &Eaug, fm: &FeatureMatrix) -> Result<Detection, GnnError> {
    model.detect(g, fm)
}
