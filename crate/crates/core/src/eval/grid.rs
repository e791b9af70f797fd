// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loocv, EvalError, Metrics, Sample};
use crate::gnn::ModelConfig;

/// One grid cell, ordered lexicographically by (batches, layers, units).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub num_batches: usize,
    pub num_layers: usize,
    pub hidden_units: usize,
}

impl GridPoint {
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            num_batches: self.num_batches,
            num_layers: self.num_layers,
            hidden_units: self.hidden_units,
            ..base.clone()
        }
    }
}

/// Batches {1, 5, 10, 15, 20, 25, 30} × layers {2, 3} × units {16, 32}.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::with_capacity(28);
    for num_batches in [1, 5, 10, 15, 20, 25, 30] {
        for num_layers in [2, 3] {
            for hidden_units in [16, 32] {
                grid.push(GridPoint { num_batches, num_layers, hidden_units });
            }
        }
    }
    grid
}

/// The winner is the configuration that alone attains the maximum of at
/// least two of recall, precision and F1. Failing that, the highest F1
/// wins; remaining ties go to the lexicographically smallest point.
pub fn select_best(table: &[(GridPoint, Metrics)]) -> Result<GridPoint, EvalError> {
    if table.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut wins = vec![0usize; table.len()];
    for get in [|m: &Metrics| m.recall, |m: &Metrics| m.precision, |m: &Metrics| m.f1] {
        let max = table.iter().map(|(_, m)| get(m)).fold(f64::NEG_INFINITY, f64::max);
        let at_max: Vec<usize> = (0..table.len()).filter(|&i| get(&table[i].1) == max).collect();
        if let [only] = at_max[..] {
            wins[only] += 1;
        }
    }
    if let Some(i) = (0..table.len()).find(|&i| wins[i] >= 2) {
        return Ok(table[i].0);
    }
    let best_f1 = table.iter().map(|(_, m)| m.f1).fold(f64::NEG_INFINITY, f64::max);
    Ok(table.iter().filter(|(_, m)| m.f1 == best_f1).map(|(p, _)| *p).min().expect("non-empty"))
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: ModelConfig,
    /// Macro-averaged LOOCV metrics per cell, in grid order.
    pub table: Vec<(GridPoint, Metrics)>,
}

/// Evaluates every cell by leave-one-out and selects the winner. Cells run
/// on up to `jobs` threads; each cell's folds run sequentially.
pub fn grid_search(dataset: &[Sample], grid: &[GridPoint], base: &ModelConfig, jobs: usize) -> Result<GridResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let cell = |p: &GridPoint| loocv(dataset, &p.apply(base), 1).map(|r| (*p, r.report.average));
    let table: Vec<Result<(GridPoint, Metrics), EvalError>> = if jobs <= 1 {
        grid.iter().map(cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::Format(e.to_string()))?;
        pool.install(|| grid.par_iter().map(cell).collect())
    };
    let table = table.into_iter().collect::<Result<Vec<_>, _>>()?;
    let best = select_best(&table)?.apply(base);
    Ok(GridResult { best, table })
}
