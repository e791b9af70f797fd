// SPDX-License-Identifier: Apache-2.0

//! Static signal probability under the input-independence assumption.

use std::collections::{HashMap, VecDeque};

use crate::netlist::{constant_net, BehaviorKind, CellDef, CellLibrary, Netlist, NetlistError};

pub const TOLERANCE: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 50;

/// Per-node probability that the node's output is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbAssignment {
    pub p1: Vec<f64>,
    /// False when the iteration hit the sweep limit; `p1` then holds the
    /// last iterate.
    pub converged: bool,
    pub sweeps: usize,
}

impl ProbAssignment {
    pub fn p0(&self, v: usize) -> f64 {
        1.0 - self.p1[v]
    }
}

/// Output-1 probability of a cell given its input-1 probabilities.
pub fn gate_probability(def: &CellDef, p: &[f64]) -> f64 {
    let and = |xs: &mut dyn Iterator<Item = f64>| xs.product::<f64>();
    let or = |xs: &mut dyn Iterator<Item = f64>| 1.0 - xs.map(|x| 1.0 - x).product::<f64>();
    let xor = || p.iter().fold(0.0, |a, &b| a * (1.0 - b) + (1.0 - a) * b);
    let groups = || def.input_groups();
    match def.kind {
        BehaviorKind::And => and(&mut p.iter().copied()),
        BehaviorKind::Nand => 1.0 - and(&mut p.iter().copied()),
        BehaviorKind::Or => or(&mut p.iter().copied()),
        BehaviorKind::Nor => 1.0 - or(&mut p.iter().copied()),
        BehaviorKind::Xor => xor(),
        BehaviorKind::Xnor => 1.0 - xor(),
        BehaviorKind::Inv => 1.0 - p[0],
        BehaviorKind::Buf | BehaviorKind::Po | BehaviorKind::Dff | BehaviorKind::Latch => p[0],
        BehaviorKind::Mux => p[2] * p[1] + (1.0 - p[2]) * p[0],
        BehaviorKind::Ao | BehaviorKind::Aoi => {
            let v = or(&mut groups().into_iter().map(|g| and(&mut g.into_iter().map(|i| p[i]))));
            if def.kind == BehaviorKind::Aoi { 1.0 - v } else { v }
        }
        BehaviorKind::Oa | BehaviorKind::Oai => {
            let v = and(&mut groups().into_iter().map(|g| or(&mut g.into_iter().map(|i| p[i]))));
            if def.kind == BehaviorKind::Oai { 1.0 - v } else { v }
        }
        BehaviorKind::Tie0 => 0.0,
        BehaviorKind::Tie1 => 1.0,
        BehaviorKind::Pi | BehaviorKind::Other => 0.5,
    }
}

/// Evaluation order: Kahn's order over combinational dependencies (edges
/// into storage cells are cut), with cells left on combinational cycles
/// appended in index order.
fn sweep_order(netlist: &Netlist, defs: &[&CellDef]) -> Result<Vec<usize>, NetlistError> {
    let n = netlist.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (u, v) in netlist.wire_edges()? {
        if !defs[v].kind.is_sequential() {
            succ[u].push(v);
            indeg[v] += 1;
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
    Ok(order)
}

/// Gauss-Seidel fixed-point iteration from 0.5 everywhere. Stops when a
/// sweep changes no node by `TOLERANCE` or more, or after `MAX_SWEEPS`.
/// Once a sweep fails to shrink the largest change, updates are damped by
/// one half for the remaining sweeps. Unconnected or undriven inputs count
/// as 0.5; the literal nets `1'b0`/`1'b1` as 0 and 1.
pub fn static_probabilities(netlist: &Netlist, lib: &CellLibrary) -> Result<ProbAssignment, NetlistError> {
    let defs = netlist
        .cells
        .iter()
        .map(|c| lib.lookup(&c.cell_type))
        .collect::<Result<Vec<_>, _>>()?;
    let drivers = netlist.drivers()?;
    let order = sweep_order(netlist, &defs)?;

    enum Src {
        Node(usize),
        Const(f64),
    }
    let sources: Vec<Vec<Src>> = netlist
        .cells
        .iter()
        .zip(&defs)
        .map(|(cell, def)| {
            (0..def.inputs.len())
                .map(|i| match cell.inputs.get(i).and_then(Option::as_deref) {
                    Some(net) => match (constant_net(net), drivers.get(net)) {
                        (Some(b), _) => Src::Const(if b { 1.0 } else { 0.0 }),
                        (None, Some(&d)) => Src::Node(d),
                        (None, None) => Src::Const(0.5),
                    },
                    None => Src::Const(0.5),
                })
                .collect()
        })
        .collect();

    let mut p1 = vec![0.5; netlist.len()];
    let mut buf = Vec::new();
    let mut damping = false;
    let mut prev_change = f64::INFINITY;
    for sweep in 1..=MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for &v in &order {
            buf.clear();
            buf.extend(sources[v].iter().map(|s| match s {
                Src::Node(d) => p1[*d],
                Src::Const(c) => *c,
            }));
            let mut next = gate_probability(defs[v], &buf);
            if damping {
                next = 0.5 * p1[v] + 0.5 * next;
            }
            change = change.max((next - p1[v]).abs());
            p1[v] = next;
        }
        if change < TOLERANCE {
            return Ok(ProbAssignment { p1, converged: true, sweeps: sweep });
        }
        if change >= prev_change {
            damping = true;
        }
        prev_change = change;
    }
    Ok(ProbAssignment { p1, converged: false, sweeps: MAX_SWEEPS })
}

/// Output probabilities by exhaustive enumeration of a combinational
/// netlist's primary inputs. Used as a test oracle; `O(2^|PI| · |cells|)`.
pub fn truth_table_probabilities(netlist: &Netlist, lib: &CellLibrary) -> Result<Vec<f64>, NetlistError> {
    let sim = crate::sim::Simulator::new(netlist, lib)?;
    let k = netlist.primary_inputs.len();
    assert!(k <= 20, "exhaustive enumeration limited to 20 inputs");
    let mut ones = vec![0u64; netlist.len()];
    let total = 1u64 << k;
    let mut base = 0u64;
    while base < total {
        let lanes = (total - base).min(64);
        let mask = if lanes == 64 { u64::MAX } else { (1u64 << lanes) - 1 };
        let inputs: HashMap<&str, u64> = netlist
            .primary_inputs
            .iter()
            .enumerate()
            .map(|(j, pi)| {
                let mut w = 0u64;
                for lane in 0..lanes {
                    if ((base + lane) >> j) & 1 == 1 {
                        w |= 1 << lane;
                    }
                }
                (pi.as_str(), w)
            })
            .collect();
        let values = sim.eval(&inputs, &HashMap::new(), &HashMap::new());
        for (v, w) in values.iter().enumerate() {
            ones[v] += u64::from((w & mask).count_ones());
        }
        base += lanes;
    }
    Ok(ones.into_iter().map(|c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_verilog;

    fn probs(src: &str) -> (Netlist, ProbAssignment) {
        let lib = CellLibrary::default();
        let n = parse_verilog(src, &lib).unwrap();
        let p = static_probabilities(&n, &lib).unwrap();
        (n, p)
    }

    #[test]
    fn and2_of_two_inputs_is_a_quarter() {
        let (n, p) = probs("module m(a,b,y); input a,b; output y; AND2 g (.A(a),.B(b),.Y(y)); endmodule");
        let g = n.index_of("g").unwrap();
        assert_eq!(p.p1[g], 0.25);
        assert_eq!(p.p0(g), 0.75);
        assert_eq!(p.p1[n.index_of("y").unwrap()], 0.25);
        assert!(p.converged);
    }

    #[test]
    fn inverter_of_input_is_a_half() {
        let (n, p) = probs("module m(a,y); input a; output y; INV g (.A(a),.Y(y)); endmodule");
        assert_eq!(p.p1[n.index_of("g").unwrap()], 0.5);
    }

    #[test]
    fn constants_and_mux() {
        let (n, p) = probs(
            "module m(a,b,y); input a,b; output y; wire w;
             AND2 g0 (.A(a),.B(1'b1),.Y(w)); MUX2 g1 (.A(w),.B(1'b0),.S(b),.Y(y)); endmodule",
        );
        assert_eq!(p.p1[n.index_of("g0").unwrap()], 0.5);
        assert_eq!(p.p1[n.index_of("g1").unwrap()], 0.25);
    }

    #[test]
    fn flip_flop_takes_data_probability() {
        let (n, p) = probs(
            "module m(a,b,clk,y); input a,b,clk; output y; wire d;
             NOR2 g (.A(a),.B(b),.Y(d)); DFF r (.D(d),.CLK(clk),.Q(y)); endmodule",
        );
        assert_eq!(p.p1[n.index_of("r").unwrap()], 0.25);
    }

    #[test]
    fn inverter_ring_settles_with_damping() {
        let (n, p) = probs(
            "module m(e,y); input e; output y; wire r0,r1,r2,x;
             NAND2 g (.A(e),.B(r2),.Y(r0)); INV i1 (.A(r0),.Y(r1)); INV i2 (.A(r1),.Y(r2)); BUF b (.A(r2),.Y(y)); endmodule",
        );
        for v in 0..n.len() {
            assert!((0.0..=1.0).contains(&p.p1[v]));
        }
        assert!(p.converged, "{p:?}");
    }

    #[test]
    fn aoi_groups() {
        let lib = CellLibrary::default();
        let def = lib.lookup("AOI21").unwrap();
        // 1 - (1 - a1*a2)(1 - b) complemented.
        let expect = 1.0 - (1.0 - (1.0 - 0.5 * 0.5) * (1.0 - 0.5));
        assert_eq!(gate_probability(def, &[0.5, 0.5, 0.5]), expect);
    }

    #[test]
    fn matches_truth_table_on_a_tree() {
        let lib = CellLibrary::default();
        let n = parse_verilog(
            "module m(a,b,c,d,y); input a,b,c,d; output y; wire w0,w1;
             XOR2 g0 (.A(a),.B(b),.Y(w0)); NAND2 g1 (.A(c),.B(d),.Y(w1)); OAI21 g2 (.A1(w0),.A2(w1),.B(a),.Y(y)); endmodule",
            &lib,
        )
        .unwrap();
        let truth = truth_table_probabilities(&n, &lib).unwrap();
        let p = static_probabilities(&n, &lib).unwrap();
        // g2 reconverges on `a`, so only the fanout-free gates must agree.
        for id in ["g0", "g1"] {
            let v = n.index_of(id).unwrap();
            assert!((truth[v] - p.p1[v]).abs() < 1e-12);
        }
    }
}
