// SPDX-License-Identifier: Apache-2.0

//! Bit-parallel zero-delay logic simulator: each `u64` carries 64
//! independent input vectors.
//!
//! Storage-cell outputs are free variables supplied by the caller, so one
//! evaluation is a single combinational frame. `OTHER` cells behave as
//! buffers of their first input. Cells on combinational cycles see the
//! values their drivers had when first reached (zero if not yet computed).

use std::collections::{HashMap, VecDeque};

use crate::netlist::{constant_net, BehaviorKind, CellDef, CellLibrary, Netlist, NetlistError};

#[derive(Debug, Clone)]
enum Src {
    Node(usize),
    Const(u64),
}

#[derive(Debug, Clone)]
pub struct Simulator {
    ids: Vec<String>,
    defs: Vec<CellDef>,
    sources: Vec<Vec<Src>>,
    order: Vec<usize>,
}

pub fn gate_value(def: &CellDef, x: &[u64]) -> u64 {
    let and = |it: &mut dyn Iterator<Item = u64>| it.fold(!0u64, |a, b| a & b);
    let or = |it: &mut dyn Iterator<Item = u64>| it.fold(0u64, |a, b| a | b);
    let xor = || x.iter().fold(0u64, |a, b| a ^ b);
    match def.kind {
        BehaviorKind::And => and(&mut x.iter().copied()),
        BehaviorKind::Nand => !and(&mut x.iter().copied()),
        BehaviorKind::Or => or(&mut x.iter().copied()),
        BehaviorKind::Nor => !or(&mut x.iter().copied()),
        BehaviorKind::Xor => xor(),
        BehaviorKind::Xnor => !xor(),
        BehaviorKind::Inv => !x[0],
        BehaviorKind::Buf | BehaviorKind::Po | BehaviorKind::Other | BehaviorKind::Dff | BehaviorKind::Latch => {
            x.first().copied().unwrap_or(0)
        }
        BehaviorKind::Mux => (x[2] & x[1]) | (!x[2] & x[0]),
        BehaviorKind::Ao | BehaviorKind::Aoi => {
            let v = or(&mut def.input_groups().into_iter().map(|g| and(&mut g.into_iter().map(|i| x[i]))));
            if def.kind == BehaviorKind::Aoi { !v } else { v }
        }
        BehaviorKind::Oa | BehaviorKind::Oai => {
            let v = and(&mut def.input_groups().into_iter().map(|g| or(&mut g.into_iter().map(|i| x[i]))));
            if def.kind == BehaviorKind::Oai { !v } else { v }
        }
        BehaviorKind::Tie0 | BehaviorKind::Pi => 0,
        BehaviorKind::Tie1 => !0,
    }
}

impl Simulator {
    pub fn new(netlist: &Netlist, lib: &CellLibrary) -> Result<Self, NetlistError> {
        let defs = netlist
            .cells
            .iter()
            .map(|c| lib.lookup(&c.cell_type).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let drivers = netlist.drivers()?;
        let sources: Vec<Vec<Src>> = netlist
            .cells
            .iter()
            .zip(&defs)
            .map(|(cell, def)| {
                (0..def.inputs.len())
                    .map(|i| match cell.inputs.get(i).and_then(Option::as_deref) {
                        Some(net) => match (constant_net(net), drivers.get(net)) {
                            (Some(b), _) => Src::Const(if b { !0 } else { 0 }),
                            (None, Some(&d)) => Src::Node(d),
                            (None, None) => Src::Const(0),
                        },
                        None => Src::Const(0),
                    })
                    .collect()
            })
            .collect();

        let n = netlist.len();
        let mut succ = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (v, srcs) in sources.iter().enumerate() {
            if defs[v].kind.is_sequential() {
                continue;
            }
            for s in srcs {
                if let Src::Node(u) = s {
                    succ[*u].push(v);
                    indeg[v] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while let Some(u) = queue.pop_front() {
            order.push(u);
            placed[u] = true;
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        order.extend((0..n).filter(|&v| !placed[v]));
        Ok(Simulator { ids: netlist.cells.iter().map(|c| c.id.clone()).collect(), defs, sources, order })
    }

    /// Ids of storage cells, whose outputs are free variables.
    pub fn state_cells(&self) -> Vec<&str> {
        (0..self.ids.len())
            .filter(|&v| self.defs[v].kind.is_sequential())
            .map(|v| self.ids[v].as_str())
            .collect()
    }

    /// Evaluates every node's output. `inputs` sets primary-input pseudo-cells
    /// and `state` storage cells, both by id (missing entries are 0).
    /// `overrides` forces the output of the named cells.
    pub fn eval(
        &self,
        inputs: &HashMap<&str, u64>,
        state: &HashMap<&str, u64>,
        overrides: &HashMap<&str, u64>,
    ) -> Vec<u64> {
        let mut values = vec![0u64; self.ids.len()];
        let mut buf = Vec::new();
        for &v in &self.order {
            let id = self.ids[v].as_str();
            values[v] = if let Some(&o) = overrides.get(id) {
                o
            } else {
                match self.defs[v].kind {
                    BehaviorKind::Pi => inputs.get(id).copied().unwrap_or(0),
                    k if k.is_sequential() => state.get(id).copied().unwrap_or(0),
                    _ => {
                        buf.clear();
                        buf.extend(self.sources[v].iter().map(|s| match s {
                            Src::Node(d) => values[*d],
                            Src::Const(c) => *c,
                        }));
                        gate_value(&self.defs[v], &buf)
                    }
                }
            };
        }
        values
    }

    /// Values feeding each input pin of node `v`, given a full evaluation.
    pub fn pin_values(&self, v: usize, values: &[u64]) -> Vec<u64> {
        self.sources[v]
            .iter()
            .map(|s| match s {
                Src::Node(d) => values[*d],
                Src::Const(c) => *c,
            })
            .collect()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn kind(&self, v: usize) -> BehaviorKind {
        self.defs[v].kind
    }
}
