// SPDX-License-Identifier: Apache-2.0

//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation in evaluation order; [`Tape::backward`]
//! walks it in reverse and accumulates adjoints.

use std::rc::Rc;

use super::matrix::Matrix;

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes the adjoint list from [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probability clamp used by the cross-entropy loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// Adds a `1 × c` row to every row.
    AddRow(Var, Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Rc<Vec<usize>>),
    ScatterAddRows(Var, Rc<Vec<usize>>),
    /// Softmax of an `E × 1` column within groups sharing a segment id.
    SegmentSoftmax(Var, Rc<Vec<usize>>),
    /// Scales row `k` of the first operand by entry `k` of an `E × 1` column.
    ScaleRows(Var, Var),
    /// `x · (1 + eps)` for a `1 × 1` `eps`.
    ScaleByOnePlus(Var, Var),
    /// Row `k` of `h` times the `din × dout` matrix stored flat in row
    /// `kind[k]` of `table`.
    EdgeBilinear { h: Var, table: Var, kind: Rc<Vec<usize>>, dout: usize },
    SoftmaxRows(Var),
    /// Mean over rows of `-Σ_c t_c ln(clamp(p_c))`.
    BceMean(Var, Rc<Matrix>),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((b.rows(), b.cols()), (1, self.value(x).cols()), "bias must be 1 x cols");
        let b = b.row(0).to_vec();
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            for (y, c) in v.row_mut(i).iter_mut().zip(&b) {
                *y += c;
            }
        }
        self.push(v, Op::AddRow(x, bias))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(elu);
        self.push(v, Op::Elu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|x| x.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows(), y.rows(), "concat row mismatch");
        let mut data = Vec::with_capacity(x.rows() * (x.cols() + y.cols()));
        for i in 0..x.rows() {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let v = Matrix::from_vec(x.rows(), x.cols() + y.cols(), data);
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Var {
        let m = self.value(x);
        let mut data = Vec::with_capacity(idx.len() * m.cols());
        for &i in idx.iter() {
            data.extend_from_slice(m.row(i));
        }
        let v = Matrix::from_vec(idx.len(), m.cols(), data);
        self.push(v, Op::GatherRows(x, idx))
    }

    /// Row `k` of `x` is added into output row `idx[k]` of an `n`-row result.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Rc<Vec<usize>>, n: usize) -> Var {
        let m = self.value(x);
        assert_eq!(m.rows(), idx.len(), "scatter index length mismatch");
        let mut v = Matrix::zeros(n, m.cols());
        for (k, &i) in idx.iter().enumerate() {
            for (y, a) in v.row_mut(i).iter_mut().zip(m.row(k)) {
                *y += a;
            }
        }
        self.push(v, Op::ScatterAddRows(x, idx))
    }

    pub fn segment_softmax(&mut self, x: Var, seg: Rc<Vec<usize>>, n: usize) -> Var {
        let m = self.value(x);
        assert_eq!((m.rows(), m.cols()), (seg.len(), 1), "segment softmax takes an E x 1 column");
        let mut max = vec![f64::NEG_INFINITY; n];
        for (k, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(m.get(k, 0));
        }
        let mut out: Vec<f64> = seg.iter().enumerate().map(|(k, &s)| (m.get(k, 0) - max[s]).exp()).collect();
        let mut sum = vec![0.0; n];
        for (k, &s) in seg.iter().enumerate() {
            sum[s] += out[k];
        }
        for (k, &s) in seg.iter().enumerate() {
            out[k] /= sum[s];
        }
        let v = Matrix::from_vec(seg.len(), 1, out);
        self.push(v, Op::SegmentSoftmax(x, seg))
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Var {
        let (m, sc) = (self.value(x), self.value(s));
        assert_eq!((sc.rows(), sc.cols()), (m.rows(), 1), "row scale must be E x 1");
        let mut v = m.clone();
        for i in 0..v.rows() {
            let f = sc.get(i, 0);
            v.row_mut(i).iter_mut().for_each(|y| *y *= f);
        }
        self.push(v, Op::ScaleRows(x, s))
    }

    pub fn scale_by_one_plus(&mut self, x: Var, eps: Var) -> Var {
        let e = self.value(eps);
        assert_eq!(e.shape(), (1, 1), "eps must be 1 x 1");
        let f = 1.0 + e.get(0, 0);
        let v = self.value(x).map(|y| y * f);
        self.push(v, Op::ScaleByOnePlus(x, eps))
    }

    pub fn edge_bilinear(&mut self, h: Var, table: Var, kind: Rc<Vec<usize>>, dout: usize) -> Var {
        let (hm, t) = (self.value(h), self.value(table));
        let din = hm.cols();
        assert_eq!(t.cols(), din * dout, "edge table must have din * dout columns");
        assert_eq!(hm.rows(), kind.len(), "one kind per row");
        let mut v = Matrix::zeros(hm.rows(), dout);
        for (k, &kd) in kind.iter().enumerate() {
            let w = t.row(kd);
            let out = v.row_mut(k);
            for (i, &a) in hm.row(k).iter().enumerate() {
                for (y, b) in out.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                    *y += a * b;
                }
            }
        }
        self.push(v, Op::EdgeBilinear { h, table, kind, dout })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for i in 0..v.rows() {
            softmax_in_place(v.row_mut(i));
        }
        self.push(v, Op::SoftmaxRows(x))
    }

    pub fn bce_mean(&mut self, probs: Var, targets: Rc<Matrix>) -> Var {
        let p = self.value(probs);
        assert_eq!(p.shape(), targets.shape(), "targets must match predictions");
        let n = p.rows().max(1) as f64;
        let mut loss = 0.0;
        for (x, t) in p.data().iter().zip(targets.data()) {
            if *t != 0.0 {
                loss -= t * x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
            }
        }
        let v = Matrix::from_vec(1, 1, vec![loss / n]);
        self.push(v, Op::BceMean(probs, targets))
    }

    /// Adjoints of every tape entry with respect to the `1 × 1` value `out`.
    /// Entries that do not influence `out` get `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.value(out).shape(), (1, 1), "backward starts from a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.values.len()];
        grads[out.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = &self.values[i];
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_t(bv));
                    acc(&mut grads, *b, av.t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(x, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    acc(&mut grads, *x, g.clone());
                    acc(&mut grads, *bias, gb);
                }
                Op::Elu(x) => {
                    let xv = self.value(*x);
                    let d = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .zip(y.data())
                            .map(|((gi, xi), yi)| if *xi > 0.0 { *gi } else { gi * (yi + 1.0) })
                            .collect(),
                    );
                    acc(&mut grads, *x, d);
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = self.value(*x);
                    let d = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(xv.data()).map(|(gi, xi)| if *xi > 0.0 { *gi } else { gi * slope }).collect(),
                    );
                    acc(&mut grads, *x, d);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let d = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(xv.data()).map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 }).collect(),
                    );
                    acc(&mut grads, *x, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::GatherRows(x, idx) => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows(), xv.cols());
                    for (k, &r) in idx.iter().enumerate() {
                        for (s, v) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                            *s += v;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::ScatterAddRows(x, idx) => {
                    let mut d = Matrix::zeros(idx.len(), g.cols());
                    for (k, &r) in idx.iter().enumerate() {
                        d.row_mut(k).copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, d);
                }
                Op::SegmentSoftmax(x, seg) => {
                    let n = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; n];
                    for (k, &s) in seg.iter().enumerate() {
                        dot[s] += y.get(k, 0) * g.get(k, 0);
                    }
                    let d = Matrix::from_vec(
                        seg.len(),
                        1,
                        seg.iter().enumerate().map(|(k, &s)| y.get(k, 0) * (g.get(k, 0) - dot[s])).collect(),
                    );
                    acc(&mut grads, *x, d);
                }
                Op::ScaleRows(x, s) => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let mut dx = g.clone();
                    let mut ds = Matrix::zeros(sv.rows(), 1);
                    for r in 0..g.rows() {
                        let f = sv.get(r, 0);
                        dx.row_mut(r).iter_mut().for_each(|v| *v *= f);
                        ds.set(r, 0, g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum());
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *s, ds);
                }
                Op::ScaleByOnePlus(x, eps) => {
                    let f = 1.0 + self.value(*eps).get(0, 0);
                    let xv = self.value(*x);
                    let de: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                    acc(&mut grads, *x, g.map(|v| v * f));
                    acc(&mut grads, *eps, Matrix::from_vec(1, 1, vec![de]));
                }
                Op::EdgeBilinear { h, table, kind, dout } => {
                    let (hv, tv) = (self.value(*h), self.value(*table));
                    let din = hv.cols();
                    let mut dh = Matrix::zeros(hv.rows(), din);
                    let mut dt = Matrix::zeros(tv.rows(), tv.cols());
                    for (k, &kd) in kind.iter().enumerate() {
                        let gk = g.row(k);
                        let w = tv.row(kd);
                        for i in 0..din {
                            let wi = &w[i * dout..(i + 1) * dout];
                            dh.set(k, i, gk.iter().zip(wi).map(|(a, b)| a * b).sum());
                            let hi = hv.get(k, i);
                            if hi != 0.0 {
                                for (s, gj) in dt.row_mut(kd)[i * dout..(i + 1) * dout].iter_mut().zip(gk) {
                                    *s += hi * gj;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *h, dh);
                    acc(&mut grads, *table, dt);
                }
                Op::SoftmaxRows(x) => {
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                        for (c, out) in d.row_mut(r).iter_mut().enumerate() {
                            *out = y.get(r, c) * (g.get(r, c) - dot);
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::BceMean(p, t) => {
                    let pv = self.value(*p);
                    let scale = g.get(0, 0) / pv.rows().max(1) as f64;
                    let d = Matrix::from_vec(
                        pv.rows(),
                        pv.cols(),
                        pv.data()
                            .iter()
                            .zip(t.data())
                            .map(|(x, ti)| {
                                if *ti == 0.0 || *x < PROB_CLAMP || *x > 1.0 - PROB_CLAMP {
                                    0.0
                                } else {
                                    -scale * ti / x
                                }
                            })
                            .collect(),
                    );
                    acc(&mut grads, *p, d);
                }
            }
            grads[i] = Some(g);
        }
        grads
    }
}
