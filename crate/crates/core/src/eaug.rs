// SPDX-License-Identifier: Apache-2.0

//! Edge-attributed undirected graph built from a netlist.
//!
//! Every wire from driver `u` to sink `v` contributes two adjacency entries:
//! `(v, Forward)` in `u`'s list and `(u, Backward)` in `v`'s list. An entry
//! `(y, dir)` in the list of `x` carries the attribute `d_{x→y}`; forward is
//! `(1, 0)` and backward is `(0, 1)`. Parallel wires stay distinct entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellLibrary, Label, Netlist, NetlistError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EaugError {
    #[error("node index {index} out of range for a graph of {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Direction of an adjacency entry relative to signal flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeDir {
    /// Owner drives the neighbor; attribute `(1, 0)`.
    Forward,
    /// Neighbor drives the owner; attribute `(0, 1)`.
    Backward,
}

impl EdgeDir {
    pub fn attr(self) -> [f64; 2] {
        match self {
            EdgeDir::Forward => [1.0, 0.0],
            EdgeDir::Backward => [0.0, 1.0],
        }
    }

    /// Row index of the attribute's 1 entry.
    pub fn kind(self) -> usize {
        match self {
            EdgeDir::Forward => 0,
            EdgeDir::Backward => 1,
        }
    }

    pub fn flip(self) -> EdgeDir {
        match self {
            EdgeDir::Forward => EdgeDir::Backward,
            EdgeDir::Backward => EdgeDir::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eaug {
    adjacency: Vec<Vec<(usize, EdgeDir)>>,
    node_types: Vec<usize>,
    labels: Vec<Label>,
    pi_set: Vec<usize>,
    po_set: Vec<usize>,
}

/// Flattened incoming-message view: entry `k` sends from `src[k]` to
/// `dst[k]` with attribute `d_{src→dst}` whose one-hot position is `kind[k]`.
/// Entries are grouped by destination in node order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub kind: Vec<usize>,
}

impl MessageEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Builds the EAUG of a netlist. Node `i` is `netlist.cells[i]`.
pub fn build_eaug(netlist: &Netlist, lib: &CellLibrary) -> Result<Eaug, NetlistError> {
    let node_types = netlist
        .cells
        .iter()
        .map(|c| lib.lookup(&c.cell_type).map(|d| d.type_index))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = netlist.cells.iter().map(|c| c.label).collect();
    let index = |ids: &[String]| -> Result<Vec<usize>, NetlistError> {
        ids.iter()
            .map(|id| netlist.index_of(id).ok_or_else(|| NetlistError::UnknownInstance(id.clone())))
            .collect()
    };
    let pi_set = index(&netlist.primary_inputs)?;
    let po_set = index(&netlist.primary_outputs)?;
    Ok(Eaug::from_wires(node_types, labels, &netlist.wire_edges()?, pi_set, po_set))
}

impl Eaug {
    /// Builds a graph from raw driver→sink pairs. Indices must be in range.
    pub fn from_wires(
        node_types: Vec<usize>,
        labels: Vec<Label>,
        wires: &[(usize, usize)],
        pi_set: Vec<usize>,
        po_set: Vec<usize>,
    ) -> Eaug {
        assert_eq!(node_types.len(), labels.len(), "types and labels must align");
        let mut adjacency = vec![Vec::new(); node_types.len()];
        for &(u, v) in wires {
            adjacency[u].push((v, EdgeDir::Forward));
            adjacency[v].push((u, EdgeDir::Backward));
        }
        Eaug { adjacency, node_types, labels, pi_set, po_set }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Total number of adjacency entries (twice the wire count).
    pub fn entry_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    fn check(&self, v: usize) -> Result<(), EaugError> {
        if v < self.node_count() {
            Ok(())
        } else {
            Err(EaugError::IndexOutOfRange { index: v, len: self.node_count() })
        }
    }

    /// Adjacency entries of `v` in insertion order.
    pub fn neighbors(&self, v: usize) -> Result<&[(usize, EdgeDir)], EaugError> {
        self.check(v)?;
        Ok(&self.adjacency[v])
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Number of wires into `v`.
    pub fn in_degree(&self, v: usize) -> usize {
        self.adjacency[v].iter().filter(|(_, d)| *d == EdgeDir::Backward).count()
    }

    /// Number of wires out of `v`.
    pub fn out_degree(&self, v: usize) -> usize {
        self.adjacency[v].iter().filter(|(_, d)| *d == EdgeDir::Forward).count()
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn pi_set(&self) -> &[usize] {
        &self.pi_set
    }

    pub fn po_set(&self) -> &[usize] {
        &self.po_set
    }

    pub fn trojan_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.labels[v].is_trojan()).collect()
    }

    pub fn normal_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| !self.labels[v].is_trojan()).collect()
    }

    /// Subgraph on `nodes` (deduplicated and sorted) keeping exactly the
    /// entries whose endpoints both survive. Returns the subgraph and the
    /// parent index of each subgraph node.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<(Eaug, Vec<usize>), EaugError> {
        let mut keep: Vec<usize> = nodes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&last) = keep.last() {
            self.check(last)?;
        }
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &v) in keep.iter().enumerate() {
            local[v] = i;
        }
        let adjacency = keep
            .iter()
            .map(|&v| {
                self.adjacency[v]
                    .iter()
                    .filter(|(u, _)| local[*u] != usize::MAX)
                    .map(|&(u, d)| (local[u], d))
                    .collect()
            })
            .collect();
        let remap = |set: &[usize]| set.iter().filter(|&&v| local[v] != usize::MAX).map(|&v| local[v]).collect();
        let sub = Eaug {
            adjacency,
            node_types: keep.iter().map(|&v| self.node_types[v]).collect(),
            labels: keep.iter().map(|&v| self.labels[v]).collect(),
            pi_set: remap(&self.pi_set),
            po_set: remap(&self.po_set),
        };
        Ok((sub, keep))
    }

    /// Same graph with every edge attribute reversed.
    pub fn flipped(&self) -> Eaug {
        let mut g = self.clone();
        for list in &mut g.adjacency {
            for entry in list {
                entry.1 = entry.1.flip();
            }
        }
        g
    }

    /// Incoming messages: for each entry `(u, dir)` of `v`, a message
    /// `u → v` with attribute `d_{u→v}` (the flip of `dir`).
    pub fn message_edges(&self) -> MessageEdges {
        let mut m = MessageEdges::default();
        for (v, list) in self.adjacency.iter().enumerate() {
            for &(u, dir) in list {
                m.src.push(u);
                m.dst.push(v);
                m.kind.push(dir.flip().kind());
            }
        }
        m
    }
}
