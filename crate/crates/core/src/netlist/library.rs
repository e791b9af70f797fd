// SPDX-License-Identifier: Apache-2.0

//! Cell library: maps cell names to a type slot, pin lists and a logic kind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NetlistError;

/// Number of cell-type slots in the one-hot node-type block.
pub const NUM_TYPES: usize = 40;

/// Logic function family of a cell.
///
/// Compound AND-OR families (`Aoi`, `Oai`, `Ao`, `Oa`) group their inputs by
/// the alphabetic prefix of the pin name: `A1, A2, B` forms the groups
/// `{A1, A2}` and `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BehaviorKind {
    And,
    Or,
    Nand,
    Nor,
    Xor,
    Xnor,
    Inv,
    Buf,
    /// Inputs ordered `A, B, S`; output is `B` when `S` is high.
    Mux,
    /// Storage element; the first input is the data pin.
    Dff,
    Latch,
    Aoi,
    Oai,
    Ao,
    Oa,
    Tie0,
    Tie1,
    Pi,
    Po,
    Other,
}

impl BehaviorKind {
    pub fn is_sequential(self) -> bool {
        matches!(self, BehaviorKind::Dff | BehaviorKind::Latch)
    }

    pub fn is_port(self) -> bool {
        matches!(self, BehaviorKind::Pi | BehaviorKind::Po)
    }
}

/// One library entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDef {
    pub type_index: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub kind: BehaviorKind,
}

impl CellDef {
    /// Input positions grouped by the alphabetic prefix of their pin names,
    /// in first-appearance order.
    pub fn input_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, pin) in self.inputs.iter().enumerate() {
            let prefix: String = pin.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
            match groups.iter_mut().find(|(p, _)| *p == prefix) {
                Some((_, g)) => g.push(i),
                None => groups.push((prefix, vec![i])),
            }
        }
        groups.into_iter().map(|(_, g)| g).collect()
    }
}

/// Cell library keyed by cell name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellLibrary {
    entries: BTreeMap<String, CellDef>,
}

/// Name of the primary-input pseudo-cell in the default library.
pub const PI_CELL: &str = "PI";
/// Name of the primary-output pseudo-cell in the default library.
pub const PO_CELL: &str = "PO";

const DEFAULT_CELLS: &[(&str, BehaviorKind, &[&str], &[&str])] = {
    use BehaviorKind::*;
    &[
        ("PI", Pi, &[], &["Y"]),
        ("PO", Po, &["A"], &[]),
        ("INV", Inv, &["A"], &["Y"]),
        ("BUF", Buf, &["A"], &["Y"]),
        ("AND2", And, &["A", "B"], &["Y"]),
        ("AND3", And, &["A", "B", "C"], &["Y"]),
        ("AND4", And, &["A", "B", "C", "D"], &["Y"]),
        ("NAND2", Nand, &["A", "B"], &["Y"]),
        ("NAND3", Nand, &["A", "B", "C"], &["Y"]),
        ("NAND4", Nand, &["A", "B", "C", "D"], &["Y"]),
        ("OR2", Or, &["A", "B"], &["Y"]),
        ("OR3", Or, &["A", "B", "C"], &["Y"]),
        ("OR4", Or, &["A", "B", "C", "D"], &["Y"]),
        ("NOR2", Nor, &["A", "B"], &["Y"]),
        ("NOR3", Nor, &["A", "B", "C"], &["Y"]),
        ("NOR4", Nor, &["A", "B", "C", "D"], &["Y"]),
        ("XOR2", Xor, &["A", "B"], &["Y"]),
        ("XNOR2", Xnor, &["A", "B"], &["Y"]),
        ("XOR3", Xor, &["A", "B", "C"], &["Y"]),
        ("XNOR3", Xnor, &["A", "B", "C"], &["Y"]),
        ("AOI21", Aoi, &["A1", "A2", "B"], &["Y"]),
        ("AOI22", Aoi, &["A1", "A2", "B1", "B2"], &["Y"]),
        ("OAI21", Oai, &["A1", "A2", "B"], &["Y"]),
        ("OAI22", Oai, &["A1", "A2", "B1", "B2"], &["Y"]),
        ("AO21", Ao, &["A1", "A2", "B"], &["Y"]),
        ("AO22", Ao, &["A1", "A2", "B1", "B2"], &["Y"]),
        ("OA21", Oa, &["A1", "A2", "B"], &["Y"]),
        ("OA22", Oa, &["A1", "A2", "B1", "B2"], &["Y"]),
        ("MUX2", Mux, &["A", "B", "S"], &["Y"]),
        ("DFF", Dff, &["D", "CLK"], &["Q"]),
        ("DFFR", Dff, &["D", "CLK", "RN"], &["Q"]),
        ("DFFS", Dff, &["D", "CLK", "SN"], &["Q"]),
        ("DFFRS", Dff, &["D", "CLK", "RN", "SN"], &["Q"]),
        ("LATCH", Latch, &["D", "EN"], &["Q"]),
        ("LATCHR", Latch, &["D", "EN", "RN"], &["Q"]),
        ("TIEHI", Tie1, &[], &["Y"]),
        ("TIELO", Tie0, &[], &["Y"]),
        ("CLKBUF", Buf, &["A"], &["Y"]),
        ("CLKINV", Inv, &["A"], &["Y"]),
        ("OTHER", Other, &["A"], &["Y"]),
    ]
};

impl Default for CellLibrary {
    fn default() -> Self {
        let entries = DEFAULT_CELLS
            .iter()
            .enumerate()
            .map(|(i, (name, kind, ins, outs))| {
                let def = CellDef {
                    type_index: i,
                    inputs: ins.iter().map(|s| s.to_string()).collect(),
                    outputs: outs.iter().map(|s| s.to_string()).collect(),
                    kind: *kind,
                };
                (name.to_string(), def)
            })
            .collect();
        CellLibrary { entries }
    }
}

impl CellLibrary {
    /// Builds a library from explicit entries and checks its invariants.
    pub fn new(entries: BTreeMap<String, CellDef>) -> Result<Self, NetlistError> {
        let lib = CellLibrary { entries };
        lib.validate()?;
        Ok(lib)
    }

    /// Parses a library file: a JSON object mapping cell name to
    /// `{type_index, inputs, outputs, kind}`.
    pub fn from_json(source: &str) -> Result<Self, NetlistError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let entries: BTreeMap<String, CellDef> = serde_path_to_error::deserialize(de)
            .map_err(|e| NetlistError::Schema(format!("{}: {}", e.path(), e.inner())))?;
        Self::new(entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    fn validate(&self) -> Result<(), NetlistError> {
        let mut seen = [false; NUM_TYPES];
        let (mut pis, mut pos) = (0, 0);
        for (name, def) in &self.entries {
            if def.type_index >= NUM_TYPES || seen[def.type_index] {
                return Err(NetlistError::Library(format!(
                    "cell {name}: type_index {} is out of range or already used",
                    def.type_index
                )));
            }
            seen[def.type_index] = true;
            match def.kind {
                BehaviorKind::Pi => pis += 1,
                BehaviorKind::Po => pos += 1,
                _ => {}
            }
            if def.kind == BehaviorKind::Mux && def.inputs.len() != 3 {
                return Err(NetlistError::Library(format!("cell {name}: MUX needs 3 inputs")));
            }
            if def.kind.is_sequential() && def.inputs.is_empty() {
                return Err(NetlistError::Library(format!("cell {name}: storage cell without data pin")));
            }
        }
        if pis != 1 || pos != 1 {
            return Err(NetlistError::Library(format!(
                "library needs exactly one PI and one PO entry (found {pis} and {pos})"
            )));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CellDef> {
        self.entries.get(name)
    }

    pub fn lookup(&self, name: &str) -> Result<&CellDef, NetlistError> {
        self.entries
            .get(name)
            .ok_or_else(|| NetlistError::UnknownCell(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CellDef)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn port_cell(&self, kind: BehaviorKind) -> &str {
        self.entries
            .iter()
            .find(|(_, d)| d.kind == kind)
            .map(|(n, _)| n.as_str())
            .expect("validated library has port cells")
    }

    /// Name of the cell used for primary-input pseudo-cells.
    pub fn pi_cell(&self) -> &str {
        self.port_cell(BehaviorKind::Pi)
    }

    /// Name of the cell used for primary-output pseudo-cells.
    pub fn po_cell(&self) -> &str {
        self.port_cell(BehaviorKind::Po)
    }
}
