// SPDX-License-Identifier: Apache-2.0

//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance runner. The oracles deliberately avoid the crate's tape, message
//! indexing and simulator: they walk adjacency lists and truth tables directly.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nhtd::eaug::EdgeDir;
use nhtd::gnn::{loss_and_gradients, Matrix, Params};
use nhtd::netlist::{parse_verilog, Cell, Label};
use nhtd::{seeded_rng, CellLibrary, Eaug, LayerKind, ModelConfig, Netlist, Rng};
use rand::Rng as _;

pub const METRIC_ROWS: &str = include_str!("../data/metric_rows.csv");
pub const METRIC_AVERAGES: &str = include_str!("../data/metric_averages.csv");

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub group: String,
    pub netlist: String,
    pub tn: u64,
    pub fp: u64,
    pub r#fn: u64,
    pub tp: u64,
    /// Recall, precision, F1, accuracy as printed.
    pub printed: [String; 4],
}

pub fn metric_rows() -> Vec<MetricRow> {
    METRIC_ROWS
        .lines()
        .skip(1)
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let n = |i: usize| c[i].parse::<u64>().expect("count");
            MetricRow {
                group: c[0].into(),
                netlist: c[1].into(),
                tn: n(2),
                fp: n(3),
                r#fn: n(4),
                tp: n(5),
                printed: [c[6].into(), c[7].into(), c[8].into(), c[9].into()],
            }
        })
        .collect()
}

/// `(group, [recall, precision, f1, accuracy])` as printed.
pub fn metric_averages() -> Vec<(String, [String; 4])> {
    METRIC_AVERAGES
        .lines()
        .skip(1)
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            (c[0].into(), [c[1].into(), c[2].into(), c[3].into(), c[4].into()])
        })
        .collect()
}

/// Random directed wires over `n` nodes; roughly `wires_per_node * n` pairs,
/// self loops excluded, parallel wires allowed.
pub fn random_graph(n: usize, wires_per_node: f64, rng: &mut Rng) -> Eaug {
    let count = (n as f64 * wires_per_node).round() as usize;
    let mut wires = Vec::with_capacity(count);
    while wires.len() < count && n > 1 {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v {
            wires.push((u, v));
        }
    }
    let types = (0..n).map(|_| rng.random_range(0..40)).collect();
    let labels = (0..n).map(|_| if rng.random_bool(0.2) { Label::Trojan } else { Label::Normal }).collect();
    Eaug::from_wires(types, labels, &wires, vec![0], vec![n - 1])
}

pub fn random_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Matrix {
    Matrix::gaussian(rows, cols, std, rng)
}

/// Every tensor, biases and GIN `ε` included, drawn at random.
pub fn random_params(cfg: &ModelConfig, in_dim: usize, std: f64, rng: &mut Rng) -> Params {
    let tensors = nhtd::gnn::param_shapes(cfg, in_dim)
        .into_iter()
        .map(|(name, (r, c))| (name, Matrix::gaussian(r, c, std, rng)))
        .collect();
    Params { tensors }
}

fn vecmat(v: &[f64], w: &Matrix) -> Vec<f64> {
    assert_eq!(v.len(), w.rows());
    (0..w.cols()).map(|j| (0..v.len()).map(|i| v[i] * w.get(i, j)).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|i| m.get(i, 0)).collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

/// Direction attribute of the message `u → v` for an entry `(u, dir)` stored
/// at `v`: a backward entry means `u` drives `v`.
fn attr_into(dir: EdgeDir) -> [f64; 2] {
    match dir {
        EdgeDir::Backward => [1.0, 0.0],
        EdgeDir::Forward => [0.0, 1.0],
    }
}

fn cat(h: &[f64], d: [f64; 2]) -> Vec<f64> {
    let mut v = h.to_vec();
    v.extend(d);
    v
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub embeddings: Vec<Vec<f64>>,
    pub probs: Vec<[f64; 2]>,
    /// Per GAT layer and node: `(source, α)` with the self entry first.
    pub attention: Vec<Vec<Vec<(usize, f64)>>>,
}

/// Layer equations evaluated node by node.
pub fn oracle_forward(cfg: &ModelConfig, params: &Params, g: &Eaug, x: &Matrix) -> OracleOutput {
    let n = g.node_count();
    let mut h: Vec<Vec<f64>> = (0..n).map(|v| x.row(v).to_vec()).collect();
    let mut attention = Vec::new();
    let literal = cfg!(feature = "literal-gat");
    for l in 0..cfg.num_layers {
        let p = |s: &str| params.get(&format!("layer{l}.{s}"));
        let mut next = Vec::with_capacity(n);
        let mut layer_att = Vec::with_capacity(n);
        for v in 0..n {
            let nb = g.neighbors(v).unwrap();
            let out = match cfg.layer_kind {
                LayerKind::Gat => {
                    let w = p("weight");
                    let (a_dst, a_src) = (column(p("att_dst")), column(p("att_src")));
                    let z = |u: usize| vecmat(&cat(&h[u], [0.0, 0.0]), w);
                    let zv = z(v);
                    let mut support: Vec<(usize, [f64; 2])> = vec![(v, [0.0, 0.0])];
                    support.extend(nb.iter().map(|&(u, dir)| (u, attr_into(dir))));
                    let scores: Vec<f64> = support.iter().map(|&(u, _)| leaky(dot(&zv, &a_dst) + dot(&z(u), &a_src))).collect();
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let ex: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let total: f64 = ex.iter().sum();
                    let alpha: Vec<f64> = ex.iter().map(|e| e / total).collect();
                    let mut acc = vec![0.0; cfg.hidden_units];
                    for (k, &(u, d)) in support.iter().enumerate() {
                        let sender = if literal && k > 0 { v } else { u };
                        for (a, m) in acc.iter_mut().zip(vecmat(&cat(&h[sender], d), w)) {
                            *a += alpha[k] * m;
                        }
                    }
                    layer_att.push(support.iter().zip(&alpha).map(|(&(u, _), &a)| (u, a)).collect());
                    acc
                }
                LayerKind::Mpnn => {
                    let din = h[v].len();
                    let mut acc = vecmat(&h[v], p("weight"));
                    for &(u, dir) in nb {
                        let d = attr_into(dir);
                        let hidden: Vec<f64> = vecmat(&d, p("edge_mlp.w1"))
                            .iter()
                            .zip(p("edge_mlp.b1").row(0))
                            .map(|(a, b)| elu(a + b))
                            .collect();
                        let flat: Vec<f64> =
                            vecmat(&hidden, p("edge_mlp.w2")).iter().zip(p("edge_mlp.b2").row(0)).map(|(a, b)| a + b).collect();
                        let theta = Matrix::from_vec(din, cfg.hidden_units, flat);
                        for (a, m) in acc.iter_mut().zip(vecmat(&h[u], &theta)) {
                            *a += m;
                        }
                    }
                    acc
                }
                LayerKind::Gin => {
                    let eps = p("eps").get(0, 0);
                    let mut agg: Vec<f64> = h[v].iter().map(|a| (1.0 + eps) * a).collect();
                    for &(u, dir) in nb {
                        let e = vecmat(&attr_into(dir), p("edge_weight"));
                        for (a, (hu, ev)) in agg.iter_mut().zip(h[u].iter().zip(&e)) {
                            *a += (hu + ev).max(0.0);
                        }
                    }
                    let hidden: Vec<f64> =
                        vecmat(&agg, p("mlp.w1")).iter().zip(p("mlp.b1").row(0)).map(|(a, b)| elu(a + b)).collect();
                    vecmat(&hidden, p("mlp.w2")).iter().zip(p("mlp.b2").row(0)).map(|(a, b)| a + b).collect()
                }
            };
            next.push(out);
        }
        if l + 1 < cfg.num_layers {
            for row in &mut next {
                for a in row.iter_mut() {
                    *a = elu(*a);
                }
            }
        }
        if cfg.layer_kind == LayerKind::Gat {
            attention.push(layer_att);
        }
        h = next;
    }
    let probs = h
        .iter()
        .map(|z| {
            let logits: Vec<f64> =
                vecmat(z, params.get("predictor.weight")).iter().zip(params.get("predictor.bias").row(0)).map(|(a, b)| a + b).collect();
            let m = logits[0].max(logits[1]);
            let (e0, e1) = ((logits[0] - m).exp(), (logits[1] - m).exp());
            [e0 / (e0 + e1), e1 / (e0 + e1)]
        })
        .collect();
    OracleOutput { embeddings: h, probs, attention }
}

/// Worst relative error between analytic and central-difference gradients.
/// Relative error is `|a - f| / max(|a|, |f|, 1e-6)`; the floor keeps
/// vanishing entries from amplifying rounding noise. With `per_tensor`,
/// that many random entries per tensor are checked instead of all.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    cfg: &ModelConfig,
    params: &Params,
    g: &Eaug,
    x: &Matrix,
    loss_nodes: &[usize],
    targets: &[[f64; 2]],
    per_tensor: Option<usize>,
    rng: &mut Rng,
) -> BTreeMap<String, f64> {
    const STEP: f64 = 1e-5;
    let (_, grads) = loss_and_gradients(cfg, params, g, x, loss_nodes, targets).unwrap();
    let mut worst = BTreeMap::new();
    for (name, m) in &params.tensors {
        let len = m.data().len();
        let idx: Vec<usize> = match per_tensor {
            Some(k) if k < len => (0..k).map(|_| rng.random_range(0..len)).collect(),
            _ => (0..len).collect(),
        };
        let mut err: f64 = 0.0;
        for i in idx {
            let loss_at = |delta: f64| {
                let mut p = params.clone();
                p.tensors.get_mut(name).unwrap().data_mut()[i] += delta;
                loss_and_gradients(cfg, &p, g, x, loss_nodes, targets).unwrap().0
            };
            let fd = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            let an = grads[name].data()[i];
            err = err.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
        worst.insert(name.clone(), err);
    }
    worst
}

/// A chain `a → i1 → … → i9 → y` of inverters. Nodes `i4` and `i5` see
/// identical typed neighborhoods up to three hops but sit at different
/// distances from the input port.
pub fn twin_chain(lib: &CellLibrary) -> (Netlist, usize, usize) {
    let mut src = String::from("module twins(a, y);\n  input a;\n  output y;\n  wire w1, w2, w3, w4, w5, w6, w7, w8;\n");
    for i in 1..=9 {
        let input = if i == 1 { "a".to_string() } else { format!("w{}", i - 1) };
        let output = if i == 9 { "y".to_string() } else { format!("w{i}") };
        src.push_str(&format!("  INV i{i} (.A({input}), .Y({output}));\n"));
    }
    src.push_str("endmodule\n");
    let n = parse_verilog(&src, lib).unwrap();
    let (a, b) = (n.index_of("i4").unwrap(), n.index_of("i5").unwrap());
    (n, a, b)
}

/// 20 nodes: 4 inputs, 10 normal gates, a 4-gate Trojan, 2 outputs.
pub const OVERFIT_TOY: &str = "
module toy(a, b, c, d, y0, y1);
  input a, b, c, d;
  output y0, y1;
  wire n1, n2, n3, n4, n5, n6, n7, n9, n10, t1, t2, t3;
  NAND2 g1 (.A(a), .B(b), .Y(n1));
  OR2 g2 (.A(c), .B(d), .Y(n2));
  XOR2 g3 (.A(n1), .B(n2), .Y(n3));
  INV g4 (.A(n3), .Y(n4));
  AND2 g5 (.A(n1), .B(c), .Y(n5));
  NOR2 g6 (.A(n4), .B(n5), .Y(n6));
  BUF g7 (.A(n2), .Y(n7));
  MUX2 g8 (.A(n6), .B(n7), .S(a), .Y(y1));
  DFF g9 (.D(y1), .CLK(d), .Q(n9));
  XNOR2 g10 (.A(n9), .B(n4), .Y(n10));
  NOR2 trojan_t1 (.A(a), .B(b), .Y(t1));
  AND2 trojan_t2 (.A(t1), .B(n5), .Y(t2));
  AND2 trojan_t3 (.A(t2), .B(n9), .Y(t3));
  XOR2 trojan_p (.A(n10), .B(t3), .Y(y0));
endmodule
";

pub fn overfit_toy(lib: &CellLibrary) -> Netlist {
    let n = parse_verilog(OVERFIT_TOY, lib).unwrap();
    nhtd::netlist::label_nodes(n, &Default::default()).unwrap()
}

const TREE_GATES: &[(&str, usize)] = &[
    ("INV", 1),
    ("BUF", 1),
    ("AND2", 2),
    ("NAND2", 2),
    ("OR2", 2),
    ("NOR2", 2),
    ("XOR2", 2),
    ("XNOR2", 2),
    ("AND3", 3),
    ("NOR3", 3),
    ("XOR3", 3),
    ("MUX2", 3),
    ("AOI21", 3),
    ("OAI21", 3),
    ("AO22", 4),
    ("OA22", 4),
];

/// Random fanout-free combinational circuit over `pis` inputs: every net
/// feeds exactly one gate or output, so signal independence is exact.
pub fn fanout_free_circuit(pis: usize, rng: &mut Rng) -> Netlist {
    let pi_cell = |id: String| Cell { outputs: vec![Some(id.clone())], id, cell_type: "PI".into(), inputs: vec![], label: Label::Normal };
    let mut cells: Vec<Cell> = (0..pis).map(|i| pi_cell(format!("x{i}"))).collect();
    let mut open: Vec<String> = (0..pis).map(|i| format!("x{i}")).collect();
    let mut g = 0;
    while open.len() > 1 || g == 0 {
        let fits: Vec<&(&str, usize)> = TREE_GATES.iter().filter(|(_, k)| *k <= open.len()).collect();
        let &(ty, k) = fits[rng.random_range(0..fits.len())];
        let mut ins = Vec::with_capacity(k);
        for _ in 0..k {
            ins.push(Some(open.swap_remove(rng.random_range(0..open.len()))));
        }
        let id = format!("g{g}");
        open.push(format!("{id}_y"));
        cells.push(Cell { outputs: vec![Some(format!("{id}_y"))], id, cell_type: ty.into(), inputs: ins, label: Label::Normal });
        g += 1;
        if open.len() > 1 && rng.random_bool(0.05) {
            break;
        }
    }
    let mut outputs = Vec::new();
    for (i, net) in open.into_iter().enumerate() {
        outputs.push(format!("o{i}"));
        cells.push(Cell { id: format!("o{i}"), cell_type: "PO".into(), inputs: vec![Some(net)], outputs: vec![], label: Label::Normal });
    }
    Netlist { name: "tree".into(), primary_inputs: (0..pis).map(|i| format!("x{i}")).collect(), primary_outputs: outputs, cells }
}

fn eval_gate(ty: &str, a: &[bool]) -> bool {
    match ty {
        "INV" => !a[0],
        "BUF" | "PO" => a[0],
        "AND2" | "AND3" => a.iter().all(|&x| x),
        "NAND2" => !a.iter().all(|&x| x),
        "OR2" => a.iter().any(|&x| x),
        "NOR2" | "NOR3" => !a.iter().any(|&x| x),
        "XOR2" | "XOR3" => a.iter().filter(|&&x| x).count() % 2 == 1,
        "XNOR2" => a.iter().filter(|&&x| x).count() % 2 == 0,
        "MUX2" => {
            if a[2] {
                a[1]
            } else {
                a[0]
            }
        }
        "AOI21" => !((a[0] && a[1]) || a[2]),
        "OAI21" => !((a[0] || a[1]) && a[2]),
        "AO22" => (a[0] && a[1]) || (a[2] && a[3]),
        "OA22" => (a[0] || a[1]) && (a[2] || a[3]),
        other => panic!("no truth table for {other}"),
    }
}

/// Fraction of the `2^|PI|` input vectors under which each node outputs 1.
/// Cells must be listed in topological order.
pub fn truth_table_p1(netlist: &Netlist) -> Vec<f64> {
    let pis = netlist.primary_inputs.len();
    let mut ones = vec![0u64; netlist.len()];
    for vector in 0u64..(1 << pis) {
        let mut nets: std::collections::HashMap<&str, bool> = std::collections::HashMap::new();
        for (v, c) in netlist.cells.iter().enumerate() {
            let value = if c.cell_type == "PI" {
                let i = netlist.primary_inputs.iter().position(|p| *p == c.id).unwrap();
                vector >> i & 1 == 1
            } else {
                let a: Vec<bool> = c.inputs.iter().map(|n| nets[n.as_deref().unwrap()]).collect();
                eval_gate(&c.cell_type, &a)
            };
            if let Some(Some(net)) = c.outputs.first() {
                nets.insert(net.as_str(), value);
            }
            ones[v] += u64::from(value);
        }
    }
    ones.iter().map(|&k| k as f64 / (1u64 << pis) as f64).collect()
}

/// Eight inputs reduced by a depth-3 tree of seven 2-input ANDs.
pub fn and_tree8(lib: &CellLibrary) -> Netlist {
    let mut src = String::from("module tree(a0, a1, a2, a3, a4, a5, a6, a7, y);\n  input a0, a1, a2, a3, a4, a5, a6, a7;\n  output y;\n");
    src.push_str("  AND2 l0 (.A(a0), .B(a1), .Y(m0));\n  AND2 l1 (.A(a2), .B(a3), .Y(m1));\n");
    src.push_str("  AND2 l2 (.A(a4), .B(a5), .Y(m2));\n  AND2 l3 (.A(a6), .B(a7), .Y(m3));\n");
    src.push_str("  AND2 k0 (.A(m0), .B(m1), .Y(q0));\n  AND2 k1 (.A(m2), .B(m3), .Y(q1));\n");
    src.push_str("  AND2 root (.A(q0), .B(q1), .Y(y));\nendmodule\n");
    parse_verilog(&src.replace("  input", "  wire m0, m1, m2, m3, q0, q1;\n  input"), lib).unwrap()
}

pub fn rng(seed: u64) -> Rng {
    seeded_rng(seed)
}
