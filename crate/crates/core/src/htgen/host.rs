// SPDX-License-Identifier: Apache-2.0

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::netlist::{Cell, CellLibrary, Label, Netlist};
use crate::Rng;

/// Size of a random host. Node count is `inputs + gates + flops + outputs`,
/// plus one clock input when `flops > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub name: String,
    pub inputs: usize,
    pub gates: usize,
    pub flops: usize,
    pub outputs: usize,
}

const GATE_TYPES: &[&str] = &[
    "INV", "BUF", "AND2", "AND3", "NAND2", "NAND3", "OR2", "OR3", "NOR2", "NOR3", "XOR2", "XNOR2", "AOI21", "OAI21",
    "AO22", "OA21", "MUX2",
];

/// Share of gate inputs drawn from the most recent nets, which builds depth.
const LOCAL_BIAS: f64 = 0.6;
const LOCAL_WINDOW: usize = 12;

fn pi(id: String) -> Cell {
    Cell { outputs: vec![Some(id.clone())], id, cell_type: "PI".into(), inputs: vec![], label: Label::Normal }
}

/// Random clean host of default-library cells. Gates only read primary
/// inputs, flop outputs and earlier gates, so combinational logic is
/// acyclic; flops close sequential loops. Outputs prefer gates without
/// fan-out. Panics when `inputs == 0` and gates are requested.
pub fn random_host(spec: &HostSpec, lib: &CellLibrary, rng: &mut Rng) -> Netlist {
    let mut cells: Vec<Cell> = (0..spec.inputs).map(|i| pi(format!("in{i}"))).collect();
    let mut primary_inputs: Vec<String> = cells.iter().map(|c| c.id.clone()).collect();
    if spec.flops > 0 {
        cells.push(pi("clk".into()));
        primary_inputs.push("clk".into());
    }
    let mut pool: Vec<String> = (0..spec.inputs).map(|i| format!("in{i}")).collect();
    pool.extend((0..spec.flops).map(|i| format!("ff{i}_q")));
    assert!(spec.gates == 0 || !pool.is_empty(), "gates need at least one source net");

    let mut fanout = vec![0usize; spec.gates];
    for g in 0..spec.gates {
        let ty = *GATE_TYPES.choose(rng).expect("non-empty");
        let arity = lib.lookup(ty).expect("default library cell").inputs.len();
        let mut ins: Vec<String> = Vec::with_capacity(arity);
        for _ in 0..arity {
            let mut pick = || {
                if rng.random_bool(LOCAL_BIAS) {
                    let lo = pool.len().saturating_sub(LOCAL_WINDOW);
                    pool[rng.random_range(lo..pool.len())].clone()
                } else {
                    pool[rng.random_range(0..pool.len())].clone()
                }
            };
            let mut net = pick();
            for _ in 0..4 {
                if !ins.contains(&net) {
                    break;
                }
                net = pick();
            }
            ins.push(net);
        }
        for net in &ins {
            if let Some(j) = net.strip_prefix('g').and_then(|s| s.strip_suffix("_y")).and_then(|s| s.parse::<usize>().ok()) {
                fanout[j] += 1;
            }
        }
        let id = format!("g{g}");
        pool.push(format!("{id}_y"));
        cells.push(Cell {
            outputs: vec![Some(format!("{id}_y"))],
            id,
            cell_type: ty.into(),
            inputs: ins.into_iter().map(Some).collect(),
            label: Label::Normal,
        });
    }
    let gate_nets: Vec<String> = (0..spec.gates).map(|g| format!("g{g}_y")).collect();
    let data_source = |rng: &mut Rng| -> String {
        if gate_nets.is_empty() {
            pool[rng.random_range(0..pool.len())].clone()
        } else {
            gate_nets[rng.random_range(0..gate_nets.len())].clone()
        }
    };
    for f in 0..spec.flops {
        let d = data_source(rng);
        if let Some(j) = d.strip_prefix('g').and_then(|s| s.strip_suffix("_y")).and_then(|s| s.parse::<usize>().ok()) {
            fanout[j] += 1;
        }
        cells.push(Cell {
            id: format!("ff{f}"),
            cell_type: "DFF".into(),
            inputs: vec![Some(d), Some("clk".into())],
            outputs: vec![Some(format!("ff{f}_q"))],
            label: Label::Normal,
        });
    }
    let mut dangling: Vec<String> = (0..spec.gates).rev().filter(|&g| fanout[g] == 0).map(|g| format!("g{g}_y")).collect();
    let mut primary_outputs = Vec::with_capacity(spec.outputs);
    for o in 0..spec.outputs {
        let net = dangling.pop().unwrap_or_else(|| data_source(rng));
        let id = format!("out{o}");
        primary_outputs.push(id.clone());
        cells.push(Cell { id, cell_type: "PO".into(), inputs: vec![Some(net)], outputs: vec![], label: Label::Normal });
    }
    Netlist { name: spec.name.clone(), cells, primary_inputs, primary_outputs }
}
