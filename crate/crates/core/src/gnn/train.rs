// SPDX-License-Identifier: Apache-2.0

//! Training loop: every epoch, each graph is split into Trojan-balanced
//! mini-batches and every batch takes one Adam step.

use super::adam::Adam;
use super::{loss_and_gradients, to_matrix, GnnError, ModelConfig, TrainedModel};
use crate::eaug::Eaug;
use crate::features::FeatureMatrix;
use crate::sampler::{make_batches, MiniBatch};
use crate::{derive_seed, seeded_rng};

/// Stream index of the sampler generator derived from the model seed.
const SAMPLER_STREAM: u64 = 0x5341_4d50;

/// Stops after `patience` consecutive epochs without a strict improvement
/// of the best loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: None, since_best: 0 }
    }

    /// Records an epoch loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.best_epoch.is_some() && self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of every epoch run.
    pub losses: Vec<f64>,
    /// Epoch whose weights were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.losses.len()
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.losses[e])
    }
}

/// Trains a model on standardized feature matrices that share one set of
/// statistics; those statistics are stored with the model. Returns the
/// weights of the lowest-loss epoch.
pub fn train(dataset: &[(Eaug, FeatureMatrix)], config: &ModelConfig) -> Result<(TrainedModel, TrainReport), GnnError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    for (g, fm) in dataset {
        if fm.mode != config.feature_mode {
            return Err(GnnError::FeatureModeMismatch { expected: config.feature_mode, found: fm.mode });
        }
        if fm.rows() != g.node_count() {
            return Err(GnnError::ShapeMismatch(format!("{} feature rows for {} nodes", fm.rows(), g.node_count())));
        }
    }
    let stats = dataset[0].1.stats().cloned();
    let mut model = TrainedModel::init(config.clone(), stats);
    let mut best = model.params.clone();
    let mut report = TrainReport { losses: Vec::new(), best_epoch: None };
    let mut adam = Adam::new(config.lr);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut rng = seeded_rng(derive_seed(config.seed, SAMPLER_STREAM));

    let full_x: Vec<_> = dataset.iter().map(|(_, fm)| to_matrix(fm)).collect();
    let mut fixed: Vec<Vec<MiniBatch>> = Vec::new();
    if !config.resample_each_epoch {
        for (g, fm) in dataset {
            fixed.push(make_batches(g, fm, config.num_batches, config.batch_context, &mut rng)?);
        }
    }

    for epoch in 0..config.max_epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for (gi, (g, fm)) in dataset.iter().enumerate() {
            let fresh;
            let batches = if config.resample_each_epoch {
                fresh = make_batches(g, fm, config.num_batches, config.batch_context, &mut rng)?;
                &fresh
            } else {
                &fixed[gi]
            };
            for batch in batches {
                if batch.loss_nodes.is_empty() {
                    continue;
                }
                let x = match &batch.features {
                    std::borrow::Cow::Borrowed(_) => full_x[gi].clone(),
                    std::borrow::Cow::Owned(f) => to_matrix(f),
                };
                let (loss, grads) =
                    loss_and_gradients(&model.config, &model.params, &batch.graph, &x, &batch.loss_nodes, &batch.labels)?;
                if !loss.is_finite() || grads.values().any(|g| !g.is_finite()) {
                    return Err(GnnError::NaNGradient { epoch });
                }
                adam.step(&mut model.params, &grads);
                total += loss;
                count += 1;
            }
        }
        let epoch_loss = if count == 0 { 0.0 } else { total / count as f64 };
        report.losses.push(epoch_loss);
        if stopper.observe(epoch, epoch_loss) {
            best = model.params.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    report.best_epoch = stopper.best().map(|(e, _)| e);
    if report.best_epoch.is_some() {
        model.params = best;
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use crate::gnn::init_params;
    use crate::netlist::Label;

    #[test]
    fn patience_counts_epochs_since_last_improvement() {
        let mut s = EarlyStopping::new(50);
        let trace: Vec<f64> = [1.0, 0.9].into_iter().chain(std::iter::repeat_n(0.9, 100)).collect();
        let mut stopped_at = None;
        for (e, l) in trace.iter().enumerate() {
            s.observe(e, *l);
            if s.should_stop() {
                stopped_at = Some(e);
                break;
            }
        }
        assert_eq!(stopped_at, Some(51));
        assert_eq!(s.best(), Some((1, 0.9)));
    }

    fn toy() -> (Eaug, FeatureMatrix) {
        let mut labels = vec![Label::Normal; 4];
        labels[3] = Label::Trojan;
        let g = Eaug::from_wires(vec![0, 2, 4, 3], labels, &[(0, 1), (1, 2), (2, 3)], vec![0], vec![]);
        let mut v = vec![0.0; 4 * 40];
        for (i, t) in [0, 2, 4, 3].iter().enumerate() {
            v[i * 40 + t] = 1.0;
        }
        (g, FeatureMatrix::from_raw(FeatureMode::Baseline40, 4, v))
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let cfg = ModelConfig { feature_mode: FeatureMode::Baseline40, max_epochs: 0, ..Default::default() };
        let (model, report) = train(&[toy()], &cfg).unwrap();
        assert_eq!(model.params, init_params(&cfg, 40));
        assert_eq!(report.epochs_run(), 0);
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(train(&[], &ModelConfig::default()), Err(GnnError::EmptyDataset)));
    }

    #[test]
    fn loss_decreases_on_a_toy_graph() {
        let cfg = ModelConfig {
            feature_mode: FeatureMode::Baseline40,
            num_layers: 2,
            num_batches: 1,
            max_epochs: 60,
            lr: 0.05,
            ..Default::default()
        };
        let data = [toy()];
        let (model, report) = train(&data, &cfg).unwrap();
        assert!(report.best_loss().unwrap() < report.losses[0]);
        let (again, _) = train(&data, &cfg).unwrap();
        assert_eq!(model, again);
    }
}
