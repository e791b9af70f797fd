// SPDX-License-Identifier: Apache-2.0

//! Versioned JSON checkpoints. Floats are written in shortest round-trip
//! form, so a reloaded model is bit-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{check_shapes, Params};
use super::{GnnError, Matrix, ModelConfig, TrainedModel};
use crate::features::FeatureStats;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    config: ModelConfig,
    feature_stats: Option<FeatureStats>,
    tensors: BTreeMap<String, TensorDoc>,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            feature_stats: self.feature_stats.clone(),
            tensors: self
                .params
                .tensors
                .iter()
                .map(|(k, m)| (k.clone(), TensorDoc { shape: [m.rows(), m.cols()], values: m.data().to_vec() }))
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
        out.push('\n');
        out
    }

    pub fn from_json(source: &str) -> Result<TrainedModel, GnnError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let doc: CheckpointDoc = serde_path_to_error::deserialize(de)
            .map_err(|e| GnnError::Checkpoint(format!("{}: {}", e.path(), e.inner())))?;
        if doc.format_version != CHECKPOINT_VERSION {
            return Err(GnnError::Checkpoint(format!("unsupported format_version {}", doc.format_version)));
        }
        doc.config.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, t) in doc.tensors {
            if t.values.len() != t.shape[0] * t.shape[1] {
                return Err(GnnError::Checkpoint(format!("tensors.{name}: {} values for shape {:?}", t.values.len(), t.shape)));
            }
            tensors.insert(name, Matrix::from_vec(t.shape[0], t.shape[1], t.values));
        }
        let params = Params { tensors };
        check_shapes(&doc.config, doc.config.feature_mode.dim(), &params)?;
        if let Some(stats) = &doc.feature_stats {
            if stats.mode != doc.config.feature_mode {
                return Err(GnnError::FeatureModeMismatch { expected: doc.config.feature_mode, found: stats.mode });
            }
        }
        Ok(TrainedModel { config: doc.config, params, feature_stats: doc.feature_stats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::LayerKind;

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [LayerKind::Gat, LayerKind::Mpnn, LayerKind::Gin] {
            let cfg = ModelConfig { layer_kind: kind, seed: 17, ..Default::default() };
            let m = TrainedModel::init(cfg, None);
            let text = m.to_json();
            let back = TrainedModel::from_json(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = TrainedModel::init(ModelConfig::default(), None);
        let text = m.to_json().replacen("\"hidden_units\": 16", "\"hidden_units\": 32", 1);
        assert!(matches!(TrainedModel::from_json(&text), Err(GnnError::ShapeMismatch(_))));
    }
}
