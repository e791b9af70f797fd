// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;

use super::{Confusion, EvalError, MetricsReport};
use crate::derive_seed;
use crate::eaug::Eaug;
use crate::features::{apply_stats, FeatureMatrix, FeatureStats};
use crate::gnn::{train, ModelConfig};

/// One netlist prepared for evaluation: graph plus raw features.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub graph: Eaug,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldInfo {
    pub test: String,
    pub seed: u64,
    /// Checksum of every raw feature value the fold's statistics were fit on.
    pub stats_checksum: u64,
    pub stats: FeatureStats,
    pub epochs_run: usize,
    pub confusion: Confusion,
}

#[derive(Debug, Clone)]
pub struct LoocvResult {
    pub report: MetricsReport,
    pub folds: Vec<FoldInfo>,
}

/// FNV-1a over the bit patterns of all values, in order.
pub fn stats_checksum(matrices: &[&FeatureMatrix]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for fm in matrices {
        for v in fm.values() {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn run_fold(dataset: &[Sample], config: &ModelConfig, k: usize) -> Result<FoldInfo, EvalError> {
    let train_raw: Vec<&FeatureMatrix> =
        dataset.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| &s.features).collect();
    let stats = FeatureStats::fit(&train_raw)?;
    let train_set = dataset
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, s)| Ok((s.graph.clone(), apply_stats(&s.features, &stats)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let seed = derive_seed(config.seed, k as u64);
    let cfg = ModelConfig { seed, ..config.clone() };
    let (model, report) = train(&train_set, &cfg)?;
    let test = &dataset[k];
    let x = apply_stats(&test.features, &stats)?;
    let det = model.detect(&test.graph, &x)?;
    Ok(FoldInfo {
        test: test.name.clone(),
        seed,
        stats_checksum: stats_checksum(&train_raw),
        stats,
        epochs_run: report.epochs_run(),
        confusion: Confusion::from_labels(test.graph.labels(), &det.labels),
    })
}

/// Leave-one-out: each netlist is tested once by a model trained on all the
/// others, with standardization fit on the training folds only. Fold `k`
/// trains with seed `derive_seed(config.seed, k)`, so results do not depend
/// on `jobs`.
pub fn loocv(dataset: &[Sample], config: &ModelConfig, jobs: usize) -> Result<LoocvResult, EvalError> {
    if dataset.len() < 2 {
        return Err(EvalError::InsufficientData(dataset.len()));
    }
    let folds: Vec<Result<FoldInfo, EvalError>> = if jobs <= 1 {
        (0..dataset.len()).map(|k| run_fold(dataset, config, k)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::Format(e.to_string()))?;
        pool.install(|| (0..dataset.len()).into_par_iter().map(|k| run_fold(dataset, config, k)).collect())
    };
    let folds = folds.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport::from_confusions(
        folds.iter().map(|f| (f.test.clone(), f.confusion)).collect(),
        Some(config.clone()),
    );
    Ok(LoocvResult { report, folds })
}
