// SPDX-License-Identifier: Apache-2.0

//! Canonical graph JSON.
//!
//! Keys are written sorted, nodes in netlist order and edges grouped by sink
//! in node order, then by input-pin order. Reading assigns each node's inputs
//! positionally from its incoming edges in file order, so
//! `parse_graph_json(&write_graph_json(x)) == x.canonical()`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Cell, Label, Netlist, NetlistError};

// Field order is the serialized key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    edges: Vec<EdgeDoc>,
    name: String,
    nodes: Vec<NodeDoc>,
    primary_inputs: Vec<String>,
    primary_outputs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    label: Label,
    #[serde(rename = "type")]
    cell_type: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: String,
    to: String,
}

pub fn parse_graph_json(source: &str) -> Result<Netlist, NetlistError> {
    let de = &mut serde_json::Deserializer::from_str(source);
    let doc: GraphDoc = serde_path_to_error::deserialize(de)
        .map_err(|e| NetlistError::Schema(format!("{}: {}", e.path(), e.inner())))?;

    let mut index = HashMap::with_capacity(doc.nodes.len());
    for (i, node) in doc.nodes.iter().enumerate() {
        if index.insert(node.id.as_str(), i).is_some() {
            return Err(NetlistError::DuplicateId(node.id.clone()));
        }
    }
    let outputs: HashSet<&str> = doc.primary_outputs.iter().map(String::as_str).collect();
    let mut cells: Vec<Cell> = doc
        .nodes
        .iter()
        .map(|n| Cell {
            id: n.id.clone(),
            cell_type: n.cell_type.clone(),
            inputs: Vec::new(),
            outputs: if outputs.contains(n.id.as_str()) { Vec::new() } else { vec![Some(n.id.clone())] },
            label: n.label,
        })
        .collect();
    for (k, edge) in doc.edges.iter().enumerate() {
        if !index.contains_key(edge.from.as_str()) {
            return Err(NetlistError::Schema(format!("edges[{k}].from: unknown node `{}`", edge.from)));
        }
        if outputs.contains(edge.from.as_str()) {
            return Err(NetlistError::Schema(format!("edges[{k}].from: primary output `{}` drives nothing", edge.from)));
        }
        let Some(&sink) = index.get(edge.to.as_str()) else {
            return Err(NetlistError::Schema(format!("edges[{k}].to: unknown node `{}`", edge.to)));
        };
        cells[sink].inputs.push(Some(edge.from.clone()));
    }
    for (key, list) in [("primary_inputs", &doc.primary_inputs), ("primary_outputs", &doc.primary_outputs)] {
        for (k, id) in list.iter().enumerate() {
            if !index.contains_key(id.as_str()) {
                return Err(NetlistError::Schema(format!("{key}[{k}]: unknown node `{id}`")));
            }
        }
    }
    let netlist = Netlist {
        name: doc.name,
        cells,
        primary_inputs: doc.primary_inputs,
        primary_outputs: doc.primary_outputs,
    };
    netlist.validate()?;
    Ok(netlist)
}

/// Serializes the canonical form of `netlist`.
///
/// Panics if a net has more than one driver; parsed netlists never do.
pub fn write_graph_json(netlist: &Netlist) -> String {
    let edges = netlist
        .wire_edges()
        .expect("netlist has single-driver nets")
        .into_iter()
        .map(|(from, to)| EdgeDoc { from: netlist.cells[from].id.clone(), to: netlist.cells[to].id.clone() })
        .collect();
    let doc = GraphDoc {
        edges,
        name: netlist.name.clone(),
        nodes: netlist
            .cells
            .iter()
            .map(|c| NodeDoc { id: c.id.clone(), label: c.label, cell_type: c.cell_type.clone() })
            .collect(),
        primary_inputs: netlist.primary_inputs.clone(),
        primary_outputs: netlist.primary_outputs.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("graph serializes");
    out.push('\n');
    out
}
