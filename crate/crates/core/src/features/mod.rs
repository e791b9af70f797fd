// SPDX-License-Identifier: Apache-2.0

//! Initial node features.
//!
//! `Netlist46` column layout (0-based):
//!
//! | columns | content                                   |
//! |---------|-------------------------------------------|
//! | 0, 1    | in-degree, out-degree                     |
//! | 2..42   | cell-type one-hot (library `type_index`)  |
//! | 42, 43  | hop distance to nearest PI, nearest PO    |
//! | 44, 45  | probability of output 0, of output 1      |
//!
//! `Baseline40` keeps only the one-hot block. Standardization touches the
//! non-one-hot columns only.

mod prob;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eaug::{build_eaug, Eaug};
use crate::netlist::{CellLibrary, Netlist, NetlistError, NUM_TYPES};

pub use prob::{gate_probability, static_probabilities, truth_table_probabilities, ProbAssignment, MAX_SWEEPS, TOLERANCE};

/// Distance assigned to nodes that cannot reach any anchor.
pub const UNREACHABLE: i64 = -1;

/// Non-one-hot columns of a `Netlist46` row.
pub const STANDARDIZED_COLUMNS: [usize; 6] = [0, 1, 42, 43, 44, 45];

pub const FEATURE_FILE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature mode mismatch: expected {expected:?}, found {found:?}")]
    ModeMismatch { expected: FeatureMode, found: FeatureMode },
    #[error("standardization statistics are missing")]
    StatsMissing,
    #[error("feature matrix is already standardized")]
    AlreadyStandardized,
    #[error("component length {found} does not match node count {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("cannot fit statistics on zero rows")]
    EmptyFit,
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Netlist46,
    Baseline40,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Netlist46 => 46,
            FeatureMode::Baseline40 => NUM_TYPES,
        }
    }

    pub fn standardized_columns(self) -> &'static [usize] {
        match self {
            FeatureMode::Netlist46 => &STANDARDIZED_COLUMNS,
            FeatureMode::Baseline40 => &[],
        }
    }

    /// First column of the one-hot type block.
    pub fn type_offset(self) -> usize {
        match self {
            FeatureMode::Netlist46 => 2,
            FeatureMode::Baseline40 => 0,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "netlist46" | "netlist" => Ok(FeatureMode::Netlist46),
            "baseline40" | "baseline" => Ok(FeatureMode::Baseline40),
            _ => Err(format!("unknown feature mode `{s}` (expected netlist46 or baseline40)")),
        }
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mode: FeatureMode,
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Fits over every row of every matrix. Matrices must be raw.
    pub fn fit(matrices: &[&FeatureMatrix]) -> Result<FeatureStats, FeatureError> {
        let mode = matrices.first().ok_or(FeatureError::EmptyFit)?.mode;
        let mut count = 0usize;
        for fm in matrices {
            if fm.mode != mode {
                return Err(FeatureError::ModeMismatch { expected: mode, found: fm.mode });
            }
            if fm.standardized {
                return Err(FeatureError::AlreadyStandardized);
            }
            count += fm.rows;
        }
        if count == 0 {
            return Err(FeatureError::EmptyFit);
        }
        let columns = mode.standardized_columns().to_vec();
        let mut mean = vec![0.0; columns.len()];
        let mut std = vec![0.0; columns.len()];
        for (k, &c) in columns.iter().enumerate() {
            let sum: f64 = matrices.iter().flat_map(|fm| (0..fm.rows).map(move |i| fm.get(i, c))).sum();
            let mu = sum / count as f64;
            let var: f64 = matrices
                .iter()
                .flat_map(|fm| (0..fm.rows).map(move |i| (fm.get(i, c) - mu).powi(2)))
                .sum::<f64>()
                / count as f64;
            mean[k] = mu;
            std[k] = var.sqrt();
        }
        Ok(FeatureStats { mode, columns, mean, std })
    }
}

/// Row-major per-node feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub mode: FeatureMode,
    rows: usize,
    values: Vec<f64>,
    stats: Option<FeatureStats>,
    standardized: bool,
}

impl FeatureMatrix {
    /// Wraps raw (unstandardized) values.
    pub fn from_raw(mode: FeatureMode, rows: usize, values: Vec<f64>) -> FeatureMatrix {
        assert_eq!(values.len(), rows * mode.dim(), "values must fill rows x dim");
        FeatureMatrix { mode, rows, values, stats: None, standardized: false }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.mode.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stats(&self) -> Option<&FeatureStats> {
        self.stats.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Attaches statistics without transforming the rows.
    pub fn with_stats(mut self, stats: FeatureStats) -> Result<FeatureMatrix, FeatureError> {
        if stats.mode != self.mode {
            return Err(FeatureError::ModeMismatch { expected: self.mode, found: stats.mode });
        }
        self.stats = Some(stats);
        Ok(self)
    }

    /// Rows restricted to `nodes`, in that order.
    pub fn select(&self, nodes: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(nodes.len() * self.dim());
        for &v in nodes {
            values.extend_from_slice(self.row(v));
        }
        FeatureMatrix { mode: self.mode, rows: nodes.len(), values, stats: self.stats.clone(), standardized: self.standardized }
    }

    /// Baseline projection of a `Netlist46` matrix.
    pub fn to_baseline(&self) -> FeatureMatrix {
        if self.mode == FeatureMode::Baseline40 {
            return self.clone();
        }
        let mut values = Vec::with_capacity(self.rows * NUM_TYPES);
        for i in 0..self.rows {
            values.extend_from_slice(&self.row(i)[2..2 + NUM_TYPES]);
        }
        FeatureMatrix { mode: FeatureMode::Baseline40, rows: self.rows, values, stats: None, standardized: false }
    }

    /// Serializes header (mode, stats, standardized flag) and rows.
    pub fn to_json(&self) -> String {
        let file = FeatureFile {
            format_version: FEATURE_FILE_VERSION,
            mode: self.mode,
            rows: (0..self.rows).map(|i| self.row(i).to_vec()).collect(),
            standardized: self.standardized,
            stats: self.stats.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("features serialize");
        out.push('\n');
        out
    }

    pub fn from_json(source: &str) -> Result<FeatureMatrix, FeatureError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let file: FeatureFile = serde_path_to_error::deserialize(de)
            .map_err(|e| FeatureError::Format(format!("{}: {}", e.path(), e.inner())))?;
        if file.format_version != FEATURE_FILE_VERSION {
            return Err(FeatureError::Format(format!("unsupported format_version {}", file.format_version)));
        }
        let dim = file.mode.dim();
        let mut values = Vec::with_capacity(file.rows.len() * dim);
        for (i, row) in file.rows.iter().enumerate() {
            if row.len() != dim {
                return Err(FeatureError::Format(format!("rows[{i}]: expected {dim} values, found {}", row.len())));
            }
            values.extend_from_slice(row);
        }
        if let Some(stats) = &file.stats {
            if stats.mode != file.mode {
                return Err(FeatureError::ModeMismatch { expected: file.mode, found: stats.mode });
            }
        }
        Ok(FeatureMatrix { mode: file.mode, rows: file.rows.len(), values, stats: file.stats, standardized: file.standardized })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureFile {
    format_version: u32,
    mode: FeatureMode,
    rows: Vec<Vec<f64>>,
    standardized: bool,
    stats: Option<FeatureStats>,
}

/// Standardizes the non-one-hot columns. With `fit`, statistics are computed
/// from `fm` itself; otherwise the attached statistics are used unchanged.
/// Zero-variance columns become 0.
pub fn standardize(fm: &FeatureMatrix, fit: bool) -> Result<FeatureMatrix, FeatureError> {
    if fm.standardized {
        return Err(FeatureError::AlreadyStandardized);
    }
    let stats = if fit { FeatureStats::fit(&[fm])? } else { fm.stats.clone().ok_or(FeatureError::StatsMissing)? };
    apply_stats(fm, &stats)
}

/// Standardizes `fm` with externally fitted statistics.
pub fn apply_stats(fm: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix, FeatureError> {
    if stats.mode != fm.mode {
        return Err(FeatureError::ModeMismatch { expected: fm.mode, found: stats.mode });
    }
    if fm.standardized {
        return Err(FeatureError::AlreadyStandardized);
    }
    let dim = fm.dim();
    let mut values = fm.values.clone();
    for (k, &c) in stats.columns.iter().enumerate() {
        for i in 0..fm.rows {
            let x = &mut values[i * dim + c];
            *x = if stats.std[k] == 0.0 { 0.0 } else { (*x - stats.mean[k]) / stats.std[k] };
        }
    }
    Ok(FeatureMatrix { mode: fm.mode, rows: fm.rows, values, stats: Some(stats.clone()), standardized: true })
}

/// Per-node `(in_degree, out_degree)`.
pub fn degrees(g: &Eaug) -> Vec<(usize, usize)> {
    (0..g.node_count()).map(|v| (g.in_degree(v), g.out_degree(v))).collect()
}

/// Hop distance over the undirected edge set to the nearest anchor;
/// [`UNREACHABLE`] where no anchor is reachable (everywhere when `anchors`
/// is empty).
pub fn min_dist_to_anchors(g: &Eaug, anchors: &[usize]) -> Vec<i64> {
    let mut dist = vec![UNREACHABLE; g.node_count()];
    let mut queue = VecDeque::new();
    for &a in anchors {
        if dist[a] != 0 {
            dist[a] = 0;
            queue.push_back(a);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &(w, _) in g.neighbors(u).expect("queued nodes are in range") {
            if dist[w] == UNREACHABLE {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Assembles raw feature rows. Every component must have one entry per node.
pub fn assemble(
    g: &Eaug,
    mode: FeatureMode,
    probs: &ProbAssignment,
    degrees: &[(usize, usize)],
    dist_pi: &[i64],
    dist_po: &[i64],
) -> Result<FeatureMatrix, FeatureError> {
    let n = g.node_count();
    for len in [probs.p1.len(), degrees.len(), dist_pi.len(), dist_po.len()] {
        if len != n {
            return Err(FeatureError::LengthMismatch { expected: n, found: len });
        }
    }
    let dim = mode.dim();
    let offset = mode.type_offset();
    let mut values = vec![0.0; n * dim];
    for v in 0..n {
        let row = &mut values[v * dim..(v + 1) * dim];
        row[offset + g.node_types()[v]] = 1.0;
        if mode == FeatureMode::Netlist46 {
            row[0] = degrees[v].0 as f64;
            row[1] = degrees[v].1 as f64;
            row[42] = dist_pi[v] as f64;
            row[43] = dist_po[v] as f64;
            row[44] = probs.p0(v);
            row[45] = probs.p1[v];
        }
    }
    Ok(FeatureMatrix::from_raw(mode, n, values))
}

/// A netlist turned into model input: graph, raw features and the
/// probability pass that produced them.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub graph: Eaug,
    pub features: FeatureMatrix,
    pub probs: ProbAssignment,
}

/// Builds the EAUG and raw feature matrix of a netlist.
pub fn featurize(netlist: &Netlist, lib: &CellLibrary, mode: FeatureMode) -> Result<Featurized, FeatureError> {
    let graph = build_eaug(netlist, lib)?;
    let probs = static_probabilities(netlist, lib)?;
    let deg = degrees(&graph);
    let dist_pi = min_dist_to_anchors(&graph, graph.pi_set());
    let dist_po = min_dist_to_anchors(&graph, graph.po_set());
    let features = assemble(&graph, mode, &probs, &deg, &dist_pi, &dist_po)?;
    Ok(Featurized { graph, features, probs })
}
