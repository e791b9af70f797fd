// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist model, parsers and labeling.
//!
//! A [`Netlist`] is a flat list of [`Cell`]s. Primary inputs and outputs are
//! pseudo-cells of the library's `PI`/`PO` kinds, so every port is a graph
//! node. Node totals therefore include `|PI| + |PO|` port nodes on top of the
//! instantiated cells.

mod json;
mod label;
mod library;
mod verilog;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{parse_graph_json, write_graph_json};
pub use label::{label_nodes, LabelSpec, DEFAULT_PATTERN};
pub use library::{BehaviorKind, CellDef, CellLibrary, NUM_TYPES, PI_CELL, PO_CELL};
pub use verilog::parse_verilog;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("unknown cell type `{0}`")]
    UnknownCell(String),
    #[error("wire `{0}` is not declared")]
    UnboundWire(String),
    #[error("wire `{0}` has more than one driver")]
    MultipleDrivers(String),
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("cell `{cell}` has no pin `{pin}`")]
    UnknownPin { cell: String, pin: String },
    #[error("schema error at {0}")]
    Schema(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("port pseudo-cell `{0}` cannot carry a Trojan label")]
    PortLabel(String),
    #[error("invalid cell library: {0}")]
    Library(String),
    #[error("invalid label pattern: {0}")]
    Pattern(String),
}

/// Ground-truth class of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[default]
    Normal,
    Trojan,
}

impl Label {
    pub fn is_trojan(self) -> bool {
        self == Label::Trojan
    }
}

/// One instantiated cell or port pseudo-cell.
///
/// `inputs` and `outputs` hold net names in the library's pin order; `None`
/// marks an unconnected pin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub id: String,
    pub cell_type: String,
    pub inputs: Vec<Option<String>>,
    pub outputs: Vec<Option<String>>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Netlist {
    pub name: String,
    pub cells: Vec<Cell>,
    /// Ids of the primary-input pseudo-cells; each one drives the net of the
    /// same name.
    pub primary_inputs: Vec<String>,
    /// Ids of the primary-output pseudo-cells.
    pub primary_outputs: Vec<String>,
}

/// Value of a literal constant net (`1'b0`, `1'b1`), if `net` is one.
pub fn constant_net(net: &str) -> Option<bool> {
    match net {
        "1'b0" => Some(false),
        "1'b1" => Some(true),
        _ => None,
    }
}

impl Netlist {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    /// Ids of all port pseudo-cells.
    pub fn port_ids(&self) -> HashSet<&str> {
        self.primary_inputs
            .iter()
            .chain(&self.primary_outputs)
            .map(String::as_str)
            .collect()
    }

    pub fn trojan_count(&self) -> usize {
        self.cells.iter().filter(|c| c.label.is_trojan()).count()
    }

    /// Map from net name to the index of the cell driving it.
    pub fn drivers(&self) -> Result<HashMap<&str, usize>, NetlistError> {
        let mut drivers = HashMap::new();
        for (i, cell) in self.cells.iter().enumerate() {
            for net in cell.outputs.iter().flatten() {
                if drivers.insert(net.as_str(), i).is_some() || constant_net(net).is_some() {
                    return Err(NetlistError::MultipleDrivers(net.clone()));
                }
            }
        }
        Ok(drivers)
    }

    /// Driver-to-sink cell pairs, one per connected input pin whose net has a
    /// driver. Pairs are grouped by sink in cell order, then pin order.
    pub fn wire_edges(&self) -> Result<Vec<(usize, usize)>, NetlistError> {
        let drivers = self.drivers()?;
        let mut edges = Vec::new();
        for (sink, cell) in self.cells.iter().enumerate() {
            for net in cell.inputs.iter().flatten() {
                if let Some(&driver) = drivers.get(net.as_str()) {
                    edges.push((driver, sink));
                }
            }
        }
        Ok(edges)
    }

    /// Checks the structural invariants: unique ids, single drivers, port
    /// lists naming existing cells, and ports labelled Normal.
    pub fn validate(&self) -> Result<(), NetlistError> {
        let mut ids = HashSet::new();
        for cell in &self.cells {
            if !ids.insert(cell.id.as_str()) {
                return Err(NetlistError::DuplicateId(cell.id.clone()));
            }
        }
        self.drivers()?;
        for port in self.primary_inputs.iter().chain(&self.primary_outputs) {
            let idx = self
                .index_of(port)
                .ok_or_else(|| NetlistError::UnknownInstance(port.clone()))?;
            if self.cells[idx].label.is_trojan() {
                return Err(NetlistError::PortLabel(port.clone()));
            }
        }
        Ok(())
    }

    /// Checks cell types and pin counts against a library.
    pub fn validate_with(&self, lib: &CellLibrary) -> Result<(), NetlistError> {
        self.validate()?;
        for cell in &self.cells {
            let def = lib.lookup(&cell.cell_type)?;
            if cell.inputs.len() > def.inputs.len() || cell.outputs.len() > def.outputs.len() {
                return Err(NetlistError::UnknownPin {
                    cell: cell.id.clone(),
                    pin: format!("#{}", cell.inputs.len().max(cell.outputs.len())),
                });
            }
        }
        Ok(())
    }

    /// Rewrites nets into the form the graph JSON can express: each cell
    /// drives a single net named after its id, and inputs list the drivers of
    /// their connected, driven nets in pin order.
    pub fn canonical(&self) -> Netlist {
        let drivers = self.drivers().expect("canonical() requires single-driver nets");
        let outputs: HashSet<&str> = self.primary_outputs.iter().map(String::as_str).collect();
        let cells = self
            .cells
            .iter()
            .map(|cell| Cell {
                id: cell.id.clone(),
                cell_type: cell.cell_type.clone(),
                inputs: cell
                    .inputs
                    .iter()
                    .flatten()
                    .filter_map(|net| drivers.get(net.as_str()))
                    .map(|&d| Some(self.cells[d].id.clone()))
                    .collect(),
                outputs: if outputs.contains(cell.id.as_str()) {
                    Vec::new()
                } else {
                    vec![Some(cell.id.clone())]
                },
                label: cell.label,
            })
            .collect();
        Netlist {
            name: self.name.clone(),
            cells,
            primary_inputs: self.primary_inputs.clone(),
            primary_outputs: self.primary_outputs.clone(),
        }
    }
}
