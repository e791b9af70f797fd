// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::HtGenError;
use crate::netlist::{BehaviorKind, CellLibrary, Netlist};
use crate::sim::Simulator;
use crate::Rng;

/// Free variables up to which every assignment is enumerated.
pub const EXHAUSTIVE_LIMIT: usize = 10;
/// Random vectors tried above [`EXHAUSTIVE_LIMIT`].
pub const RANDOM_VECTORS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StealthReport {
    pub vectors: usize,
    pub exhaustive: bool,
    /// Host nodes whose input pins differ in at least one vector.
    pub mismatches: Vec<String>,
}

impl StealthReport {
    pub fn is_stealthy(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Checks that `infested` matches `host` while `trigger_cell` is held at 0.
///
/// Free variables are the host's primary inputs and storage-cell outputs;
/// the Trojan's own storage cells start at 0. Compared signals are the input
/// pins of every primary output and every host storage cell, i.e. the next
/// observable output and the next state.
pub fn check_stealth(
    host: &Netlist,
    infested: &Netlist,
    trigger_cell: &str,
    lib: &CellLibrary,
    rng: &mut Rng,
) -> Result<StealthReport, HtGenError> {
    let hs = Simulator::new(host, lib)?;
    let is = Simulator::new(infested, lib)?;
    let mut free: Vec<&str> = host.primary_inputs.iter().map(String::as_str).collect();
    free.extend(hs.state_cells());
    let observed: Vec<(usize, usize)> = (0..host.len())
        .filter(|&v| matches!(hs.kind(v), BehaviorKind::Po) || hs.kind(v).is_sequential())
        .map(|v| infested.index_of(&host.cells[v].id).map(|w| (v, w)))
        .collect::<Option<_>>()
        .ok_or_else(|| HtGenError::Io("infested netlist lost a host node".into()))?;
    let overrides = HashMap::from([(trigger_cell, 0u64)]);

    let exhaustive = free.len() <= EXHAUSTIVE_LIMIT;
    let vectors = if exhaustive { 1usize << free.len() } else { RANDOM_VECTORS };
    let words = vectors.div_ceil(64);
    let mut mismatched = vec![false; host.len()];
    for w in 0..words {
        let assignment: Vec<u64> = if exhaustive {
            // Bit b of word w is vector 64w + b; variable i takes bit i of it.
            (0..free.len())
                .map(|i| (0..64u64).filter(|b| ((64 * w as u64 + b) >> i) & 1 == 1).fold(0u64, |acc, b| acc | 1 << b))
                .collect()
        } else {
            (0..free.len()).map(|_| rng.random::<u64>()).collect()
        };
        let live = if (w + 1) * 64 <= vectors { !0u64 } else { (1u64 << (vectors - 64 * w)) - 1 };
        let inputs: HashMap<&str, u64> = free.iter().copied().zip(assignment).collect();
        let hv = hs.eval(&inputs, &inputs, &HashMap::new());
        let iv = is.eval(&inputs, &inputs, &overrides);
        for &(v, u) in &observed {
            let a = hs.pin_values(v, &hv);
            let b = is.pin_values(u, &iv);
            if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| (x ^ y) & live != 0) {
                mismatched[v] = true;
            }
        }
    }
    let mismatches = (0..host.len()).filter(|&v| mismatched[v]).map(|v| host.cells[v].id.clone()).collect();
    Ok(StealthReport { vectors, exhaustive, mismatches })
}
