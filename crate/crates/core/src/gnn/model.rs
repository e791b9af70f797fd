// SPDX-License-Identifier: Apache-2.0

//! Edge-attributed message-passing layers and the node classifier.
//!
//! Weights follow the row convention: a layer maps `N × din` states to
//! `N × dout` through `din × dout` matrices. Incoming messages at `v` carry
//! the attribute `d_{u→v}`, forward `(1, 0)` or backward `(0, 1)`.
//!
//! * GAT: `h'_v = Σ_{u ∈ {v} ∪ N(v)} α_{u,v} [h_u ∥ d_{u→v}] W`, where the self
//!   entry uses a zero attribute and `α` is a softmax over `{v} ∪ N(v)` of
//!   `LeakyReLU_{0.2}(z_v a_dst + z_u a_src)` with `z = [h ∥ 0] W`.
//! * MPNN: `h'_v = h_v W + Σ_u h_u Θ(d_{u→v})`, `Θ(d)` a `din × dout` matrix
//!   produced by a one-hidden-layer ELU MLP on `d`.
//! * GIN: `h'_v = MLP((1 + ε) h_v + Σ_u ReLU(h_u + d_{u→v} W_e))`.
//!
//! ELU follows every encoder layer except the last; the predictor is a single
//! affine map to two logits followed by softmax.

use std::collections::BTreeMap;
use std::rc::Rc;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use super::{GnnError, LayerKind, ModelConfig};
use crate::eaug::Eaug;
use crate::seeded_rng;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Named weight tensors, ordered by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: BTreeMap<String, Matrix>,
}

impl Params {
    pub fn get(&self, name: &str) -> &Matrix {
        self.tensors.get(name).unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|m| m.data().len()).sum()
    }
}

/// Shapes of every parameter tensor for `cfg` with `in_dim` input features.
pub fn param_shapes(cfg: &ModelConfig, in_dim: usize) -> BTreeMap<String, (usize, usize)> {
    let mut shapes = BTreeMap::new();
    let h = cfg.hidden_units;
    for l in 0..cfg.num_layers {
        let din = if l == 0 { in_dim } else { h };
        let p = |s: &str| format!("layer{l}.{s}");
        match cfg.layer_kind {
            LayerKind::Gat => {
                shapes.insert(p("weight"), (din + 2, h));
                shapes.insert(p("att_dst"), (h, 1));
                shapes.insert(p("att_src"), (h, 1));
            }
            LayerKind::Mpnn => {
                shapes.insert(p("weight"), (din, h));
                shapes.insert(p("edge_mlp.w1"), (2, h));
                shapes.insert(p("edge_mlp.b1"), (1, h));
                shapes.insert(p("edge_mlp.w2"), (h, din * h));
                shapes.insert(p("edge_mlp.b2"), (1, din * h));
            }
            LayerKind::Gin => {
                shapes.insert(p("edge_weight"), (2, din));
                shapes.insert(p("eps"), (1, 1));
                shapes.insert(p("mlp.w1"), (din, h));
                shapes.insert(p("mlp.b1"), (1, h));
                shapes.insert(p("mlp.w2"), (h, h));
                shapes.insert(p("mlp.b2"), (1, h));
            }
        }
    }
    shapes.insert("predictor.weight".into(), (h, 2));
    shapes.insert("predictor.bias".into(), (1, 2));
    shapes
}

fn is_zero_init(name: &str) -> bool {
    name.ends_with(".eps") || name.contains(".b") || name == "predictor.bias"
}

/// Gaussian weights with std `1/sqrt(fan_in)` (fan-in = row count), zero
/// biases and zero GIN `ε`. Tensors are drawn in name order.
pub fn init_params(cfg: &ModelConfig, in_dim: usize) -> Params {
    let mut rng = seeded_rng(cfg.seed);
    let tensors = param_shapes(cfg, in_dim)
        .into_iter()
        .map(|(name, (r, c))| {
            let m = if is_zero_init(&name) { Matrix::zeros(r, c) } else { Matrix::gaussian(r, c, 1.0 / (r as f64).sqrt(), &mut rng) };
            (name, m)
        })
        .collect();
    Params { tensors }
}

/// Checks that `params` has exactly the tensors and shapes `cfg` implies.
pub fn check_shapes(cfg: &ModelConfig, in_dim: usize, params: &Params) -> Result<(), GnnError> {
    let want = param_shapes(cfg, in_dim);
    if want.len() != params.len() {
        return Err(GnnError::ShapeMismatch(format!("expected {} tensors, found {}", want.len(), params.len())));
    }
    for (name, shape) in want {
        match params.tensors.get(&name) {
            Some(m) if m.shape() == shape => {}
            Some(m) => {
                return Err(GnnError::ShapeMismatch(format!("{name}: expected {shape:?}, found {:?}", m.shape())));
            }
            None => return Err(GnnError::ShapeMismatch(format!("missing tensor {name}"))),
        }
    }
    Ok(())
}

/// Index arrays shared by every layer of one forward pass.
pub struct GraphIndex {
    pub n: usize,
    /// Neighbor messages grouped by destination.
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub kind: Rc<Vec<usize>>,
    /// Self entries (`0..n`) followed by the neighbor messages.
    pub att_src: Rc<Vec<usize>>,
    pub att_dst: Rc<Vec<usize>>,
    /// Edge attributes of the attention entries (`E' × 2`, zero for self).
    pub att_attr: Rc<Matrix>,
}

impl GraphIndex {
    pub fn new(g: &Eaug) -> GraphIndex {
        let n = g.node_count();
        let m = g.message_edges();
        let att_src: Vec<usize> = (0..n).chain(m.src.iter().copied()).collect();
        let att_dst: Vec<usize> = (0..n).chain(m.dst.iter().copied()).collect();
        let mut attr = Matrix::zeros(att_src.len(), 2);
        for (k, &kd) in m.kind.iter().enumerate() {
            attr.set(n + k, kd, 1.0);
        }
        GraphIndex {
            n,
            src: Rc::new(m.src),
            dst: Rc::new(m.dst),
            kind: Rc::new(m.kind),
            att_src: Rc::new(att_src),
            att_dst: Rc::new(att_dst),
            att_attr: Rc::new(attr),
        }
    }
}

/// A recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    pub params: BTreeMap<String, Var>,
    /// `N × hidden` encoder output.
    pub embeddings: Var,
    /// `N × 2` class probabilities, column 1 = Trojan.
    pub probs: Var,
    /// Attention coefficients per GAT layer, aligned with
    /// `GraphIndex::att_src`/`att_dst`.
    pub attention: Vec<Var>,
}

fn gat_layer(t: &mut Tape, p: &BTreeMap<String, Var>, l: usize, h: Var, gi: &GraphIndex) -> (Var, Var) {
    let w = p[&format!("layer{l}.weight")];
    let a_dst = p[&format!("layer{l}.att_dst")];
    let a_src = p[&format!("layer{l}.att_src")];

    let pad = t.leaf(Matrix::zeros(gi.n, 2));
    let h_pad = t.concat_cols(h, pad);
    let z = t.matmul(h_pad, w);
    let s_dst = t.matmul(z, a_dst);
    let s_src = t.matmul(z, a_src);
    let e_dst = t.gather_rows(s_dst, gi.att_dst.clone());
    let e_src = t.gather_rows(s_src, gi.att_src.clone());
    let e = t.add(e_dst, e_src);
    let e = t.leaky_relu(e, LEAKY_SLOPE);
    let alpha = t.segment_softmax(e, gi.att_dst.clone(), gi.n);

    let sender = if cfg!(feature = "literal-gat") { gi.att_dst.clone() } else { gi.att_src.clone() };
    let h_edge = t.gather_rows(h, sender);
    let attr = t.leaf((*gi.att_attr).clone());
    let x_edge = t.concat_cols(h_edge, attr);
    let msg = t.matmul(x_edge, w);
    let weighted = t.scale_rows(msg, alpha);
    (t.scatter_add_rows(weighted, gi.att_dst.clone(), gi.n), alpha)
}

fn mpnn_layer(t: &mut Tape, p: &BTreeMap<String, Var>, l: usize, h: Var, gi: &GraphIndex, dout: usize) -> Var {
    let w = p[&format!("layer{l}.weight")];
    let self_term = t.matmul(h, w);
    let d = t.leaf(Matrix::identity(2));
    let hid = t.matmul(d, p[&format!("layer{l}.edge_mlp.w1")]);
    let hid = t.add_row(hid, p[&format!("layer{l}.edge_mlp.b1")]);
    let hid = t.elu(hid);
    let table = t.matmul(hid, p[&format!("layer{l}.edge_mlp.w2")]);
    let table = t.add_row(table, p[&format!("layer{l}.edge_mlp.b2")]);
    let h_src = t.gather_rows(h, gi.src.clone());
    let msg = t.edge_bilinear(h_src, table, gi.kind.clone(), dout);
    let agg = t.scatter_add_rows(msg, gi.dst.clone(), gi.n);
    t.add(self_term, agg)
}

fn gin_layer(t: &mut Tape, p: &BTreeMap<String, Var>, l: usize, h: Var, gi: &GraphIndex) -> Var {
    let h_src = t.gather_rows(h, gi.src.clone());
    let e = t.gather_rows(p[&format!("layer{l}.edge_weight")], gi.kind.clone());
    let msg = t.add(h_src, e);
    let msg = t.relu(msg);
    let agg = t.scatter_add_rows(msg, gi.dst.clone(), gi.n);
    let own = t.scale_by_one_plus(h, p[&format!("layer{l}.eps")]);
    let x = t.add(own, agg);
    let x = t.matmul(x, p[&format!("layer{l}.mlp.w1")]);
    let x = t.add_row(x, p[&format!("layer{l}.mlp.b1")]);
    let x = t.elu(x);
    let x = t.matmul(x, p[&format!("layer{l}.mlp.w2")]);
    t.add_row(x, p[&format!("layer{l}.mlp.b2")])
}

/// Records the full forward pass of `cfg` with `params` on `g`.
pub fn forward(cfg: &ModelConfig, params: &Params, g: &Eaug, x: &Matrix) -> Result<Forward, GnnError> {
    if x.rows() != g.node_count() {
        return Err(GnnError::ShapeMismatch(format!("{} feature rows for {} nodes", x.rows(), g.node_count())));
    }
    check_shapes(cfg, x.cols(), params)?;
    let gi = GraphIndex::new(g);
    let mut t = Tape::new();
    let vars: BTreeMap<String, Var> = params.tensors.iter().map(|(k, m)| (k.clone(), t.leaf(m.clone()))).collect();
    let mut h = t.leaf(x.clone());
    let mut attention = Vec::new();
    for l in 0..cfg.num_layers {
        h = match cfg.layer_kind {
            LayerKind::Gat => {
                let (out, alpha) = gat_layer(&mut t, &vars, l, h, &gi);
                attention.push(alpha);
                out
            }
            LayerKind::Mpnn => mpnn_layer(&mut t, &vars, l, h, &gi, cfg.hidden_units),
            LayerKind::Gin => gin_layer(&mut t, &vars, l, h, &gi),
        };
        if l + 1 < cfg.num_layers {
            h = t.elu(h);
        }
    }
    let logits = t.matmul(h, vars["predictor.weight"]);
    let logits = t.add_row(logits, vars["predictor.bias"]);
    let probs = t.softmax_rows(logits);
    Ok(Forward { tape: t, params: vars, embeddings: h, probs, attention })
}

/// Mean cross-entropy over `loss_nodes` and its gradient for every tensor.
pub fn loss_and_gradients(
    cfg: &ModelConfig,
    params: &Params,
    g: &Eaug,
    x: &Matrix,
    loss_nodes: &[usize],
    targets: &[[f64; 2]],
) -> Result<(f64, BTreeMap<String, Matrix>), GnnError> {
    let mut f = forward(cfg, params, g, x)?;
    let picked = f.tape.gather_rows(f.probs, Rc::new(loss_nodes.to_vec()));
    let t = Matrix::from_vec(targets.len(), 2, targets.iter().flatten().copied().collect());
    let loss = f.tape.bce_mean(picked, Rc::new(t));
    let value = f.tape.value(loss).get(0, 0);
    let mut grads = f.tape.backward(loss);
    let out = f
        .params
        .iter()
        .map(|(name, v)| {
            let (r, c) = params.get(name).shape();
            let gm = grads[v.index()].take().unwrap_or_else(|| Matrix::zeros(r, c));
            (name.clone(), gm)
        })
        .collect();
    Ok((value, out))
}
