//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as it is evaluated. Operations panic on
//! shape mismatches: shapes are validated at the public entry points of the
//! model code, so a mismatch here is a bug rather than bad input.

use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, numel, strides, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Powf(Var, f64),
    MatMul(Var, Var),
    SumAll(Var),
    SumAxis(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Narrow(Var, usize, usize),
    Concat(Vec<Var>, usize),
    StraightThrough(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("cannot broadcast {a:?} with {b:?}"),
        };
    }
    out
}

fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                s[i - off]
            }
        })
        .collect()
}

/// Visit every output element with the matching input offsets.
fn broadcast_zip(out: &[usize], a: &[usize], b: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n = numel(out);
    if a == out && b == out {
        for i in 0..n {
            f(i, i, i);
        }
        return;
    }
    if a == out && numel(b) == 1 {
        for i in 0..n {
            f(i, i, 0);
        }
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let nd = out.len();
    if nd == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[nd - 1];
    let (ia_step, ib_step) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd];
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut o = 0;
    while o < n {
        let (mut ja, mut jb) = (ia, ib);
        for _ in 0..inner {
            f(o, ja, jb);
            o += 1;
            ja += ia_step;
            jb += ib_step;
        }
        // advance the outer counter
        let mut d = nd - 1;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn matmul_dims(a: &[usize], b: &[usize]) -> (Vec<usize>, usize, usize, usize, usize, bool, bool) {
    assert!(a.len() >= 2 && b.len() >= 2, "matmul needs rank >= 2: {a:?} x {b:?}");
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    assert_eq!(k, k2, "matmul inner dims: {a:?} x {b:?}");
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch: Vec<usize> = if ba.is_empty() {
        bb.to_vec()
    } else if bb.is_empty() || ba == bb {
        ba.to_vec()
    } else {
        panic!("matmul batch dims differ: {a:?} x {b:?}");
    };
    (batch.clone(), numel(&batch), m, k, n, !ba.is_empty(), !bb.is_empty())
}

fn softmax_last(x: &Tensor) -> Tensor {
    let d = *x.shape().last().expect("softmax on scalar");
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(d) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

fn log_softmax_last(x: &Tensor) -> Tensor {
    let d = *x.shape().last().expect("log_softmax on scalar");
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(d) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

fn sum_axis_keep(x: &Tensor, axis: usize) -> Tensor {
    let s = x.shape();
    let outer: usize = s[..axis].iter().product();
    let len = s[axis];
    let inner: usize = s[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * inner];
    let d = x.data();
    for o in 0..outer {
        for l in 0..len {
            let base = (o * len + l) * inner;
            for i in 0..inner {
                out[o * inner + i] += d[base + i];
            }
        }
    }
    let mut shape = s.to_vec();
    shape[axis] = 1;
    Tensor::from_parts(shape, out)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    /// Stop-gradient copy.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out_shape = broadcast_shape(va.shape(), vb.shape());
        let mut out = vec![0.0; numel(&out_shape)];
        let (da, db) = (va.data(), vb.data());
        broadcast_zip(&out_shape, va.shape(), vb.shape(), |o, i, j| {
            out[o] = f(da[i], db[j]);
        });
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_parts(out_shape, out), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(t, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, Op::Powf(a, p), |x| x.powf(p))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Batched matrix product. Batch dimensions must match, or one side must be
    /// a plain matrix shared across the other side's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (batch, nb, m, k, n, a_b, b_b) = matmul_dims(va.shape(), vb.shape());
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            let ao = if a_b { i * m * k } else { 0 };
            let bo = if b_b { i * k * n } else { 0 };
            gemm_acc(
                &va.data()[ao..ao + m * k],
                &vb.data()[bo..bo + k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = batch;
        shape.extend([m, n]);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let t = sum_axis_keep(self.value(a), axis);
        let ng = self.ng(a);
        self.push(t, Op::SumAxis(a), ng)
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let n = self.shape(a)[axis] as f64;
        let s = self.sum_axis(a, axis);
        self.scale(s, 1.0 / n)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let t = softmax_last(self.value(a));
        let ng = self.ng(a);
        self.push(t, Op::Softmax(a), ng)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = log_softmax_last(self.value(a));
        let ng = self.ng(a);
        self.push(t, Op::LogSoftmax(a), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a);
        assert_eq!(numel(shape), v.len(), "reshape {:?} -> {shape:?}", v.shape());
        let t = Tensor::from_parts(shape.to_vec(), v.data().to_vec());
        let ng = self.ng(a);
        self.push(t, Op::Reshape(a), ng)
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Var {
        let t = self.value(a).permute(axes);
        let ng = self.ng(a);
        self.push(t, Op::Permute(a, axes.to_vec()), ng)
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, a: Var) -> Var {
        let nd = self.shape(a).len();
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(a, &axes)
    }

    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let t = self.value(a).narrow(axis, start, len);
        let ng = self.ng(a);
        self.push(t, Op::Narrow(a, axis, start), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let t = Tensor::concat(&ts, axis).expect("concat shapes");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(t, Op::Concat(parts.to_vec(), axis), ng)
    }

    /// Forward value is `hard`; the gradient flows to `soft` unchanged.
    pub fn straight_through(&mut self, hard: Tensor, soft: Var) -> Var {
        assert_eq!(hard.shape(), self.shape(soft));
        let ng = self.ng(soft);
        self.push(hard, Op::StraightThrough(soft), ng)
    }

    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::ones(self.value(root).shape()));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(t.data()) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(t),
        }
    }

    fn acc_with(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.ng(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        f(slot.as_mut().unwrap().data_mut());
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
                if self.ng(a) {
                    if sa == out.shape() {
                        self.acc(grads, a, g.clone());
                    } else {
                        self.acc_with(grads, a, |ga| {
                            broadcast_zip(out.shape(), &sa, &sb, |o, ia, _| ga[ia] += gd[o]);
                        });
                    }
                }
                if self.ng(b) {
                    self.acc_with(grads, b, |gb| {
                        broadcast_zip(out.shape(), &sa, &sb, |o, _, ib| gb[ib] += sign * gd[o]);
                    });
                }
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (da, db) = (va.data(), vb.data());
                if self.ng(a) {
                    self.acc_with(grads, a, |ga| {
                        broadcast_zip(out.shape(), va.shape(), vb.shape(), |o, ia, ib| {
                            ga[ia] += gd[o] * db[ib]
                        });
                    });
                }
                if self.ng(b) {
                    self.acc_with(grads, b, |gb| {
                        broadcast_zip(out.shape(), va.shape(), vb.shape(), |o, ia, ib| {
                            gb[ib] += gd[o] * da[ia]
                        });
                    });
                }
            }
            &Op::Div(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (da, db) = (va.data(), vb.data());
                if self.ng(a) {
                    self.acc_with(grads, a, |ga| {
                        broadcast_zip(out.shape(), va.shape(), vb.shape(), |o, ia, ib| {
                            ga[ia] += gd[o] / db[ib]
                        });
                    });
                }
                if self.ng(b) {
                    self.acc_with(grads, b, |gb| {
                        broadcast_zip(out.shape(), va.shape(), vb.shape(), |o, ia, ib| {
                            gb[ib] -= gd[o] * da[ia] / (db[ib] * db[ib])
                        });
                    });
                }
            }
            &Op::Scale(a, s) => self.acc(grads, a, g.map(|x| x * s)),
            &Op::AddScalar(a) => self.acc(grads, a, g.clone()),
            &Op::Exp(a) => self.acc(grads, a, g.zip_map(out, |x, y| x * y).unwrap()),
            &Op::Log(a) => self.acc(grads, a, g.zip_map(self.value(a), |x, y| x / y).unwrap()),
            &Op::Tanh(a) => self.acc(grads, a, g.zip_map(out, |x, y| x * (1.0 - y * y)).unwrap()),
            &Op::Powf(a, p) => {
                let t = g.zip_map(self.value(a), |x, y| x * p * y.powf(p - 1.0)).unwrap();
                self.acc(grads, a, t)
            }
            &Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (_, nb, m, k, n, a_b, b_b) = matmul_dims(va.shape(), vb.shape());
                if self.ng(a) {
                    self.acc_with(grads, a, |ga| {
                        for bi in 0..nb {
                            let ao = if a_b { bi * m * k } else { 0 };
                            let bo = if b_b { bi * k * n } else { 0 };
                            gemm_nt_acc(
                                &gd[bi * m * n..(bi + 1) * m * n],
                                &vb.data()[bo..bo + k * n],
                                &mut ga[ao..ao + m * k],
                                m,
                                n,
                                k,
                            );
                        }
                    });
                }
                if self.ng(b) {
                    self.acc_with(grads, b, |gb| {
                        for bi in 0..nb {
                            let ao = if a_b { bi * m * k } else { 0 };
                            let bo = if b_b { bi * k * n } else { 0 };
                            gemm_tn_acc(
                                &va.data()[ao..ao + m * k],
                                &gd[bi * m * n..(bi + 1) * m * n],
                                &mut gb[bo..bo + k * n],
                                m,
                                k,
                                n,
                            );
                        }
                    });
                }
            }
            &Op::SumAll(a) => {
                let s = gd[0];
                self.acc_with(grads, a, |ga| ga.iter_mut().for_each(|x| *x += s));
            }
            &Op::SumAxis(a) => {
                let sa = self.value(a).shape().to_vec();
                self.acc_with(grads, a, |ga| {
                    broadcast_zip(&sa, &sa, out.shape(), |o, _, j| ga[o] += gd[j]);
                });
            }
            &Op::Softmax(a) => {
                let d = *out.shape().last().unwrap();
                self.acc_with(grads, a, |ga| {
                    for ((gr, yr), gar) in gd.chunks(d).zip(out.data().chunks(d)).zip(ga.chunks_mut(d)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((ga_j, &g_j), &y_j) in gar.iter_mut().zip(gr).zip(yr) {
                            *ga_j += y_j * (g_j - dot);
                        }
                    }
                });
            }
            &Op::LogSoftmax(a) => {
                let d = *out.shape().last().unwrap();
                self.acc_with(grads, a, |ga| {
                    for ((gr, yr), gar) in gd.chunks(d).zip(out.data().chunks(d)).zip(ga.chunks_mut(d)) {
                        let s: f64 = gr.iter().sum();
                        for ((ga_j, &g_j), &y_j) in gar.iter_mut().zip(gr).zip(yr) {
                            *ga_j += g_j - y_j.exp() * s;
                        }
                    }
                });
            }
            &Op::Reshape(a) => {
                let t = Tensor::from_parts(self.value(a).shape().to_vec(), gd.to_vec());
                self.acc(grads, a, t)
            }
            Op::Permute(a, axes) => {
                let mut inv = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inv[ax] = i;
                }
                self.acc(grads, *a, g.permute(&inv))
            }
            &Op::Narrow(a, axis, start) => {
                let sa = self.value(a).shape().to_vec();
                let outer: usize = sa[..axis].iter().product();
                let inner: usize = sa[axis + 1..].iter().product();
                let (full, len) = (sa[axis], out.shape()[axis]);
                self.acc_with(grads, a, |ga| {
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let src = o * len * inner;
                        for j in 0..len * inner {
                            ga[dst + j] += gd[src + j];
                        }
                    }
                });
            }
            Op::Concat(parts, axis) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).shape()[*axis];
                    if self.ng(p) {
                        self.acc(grads, p, g.narrow(*axis, start, len));
                    }
                    start += len;
                }
            }
            &Op::StraightThrough(soft) => self.acc(grads, soft, g.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
        let h = 1e-6;
        let mut out = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        out
    }

    fn sample(shape: &[usize], salt: f64) -> Tensor {
        Tensor::from_fn(shape, |ix| {
            let s: f64 = ix.iter().enumerate().map(|(d, &v)| (d as f64 + 1.3) * v as f64).sum();
            (s * 0.37 + salt).sin()
        })
    }

    fn check(build: impl Fn(&mut Graph, Var) -> Var, x: Tensor) {
        let mut g = Graph::new();
        let v = g.leaf(x.clone());
        let out = build(&mut g, v);
        let grads = g.backward(out);
        let analytic = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let numeric = numeric_grad(
            |t| {
                let mut g = Graph::new();
                let v = g.leaf(t.clone());
                let o = build(&mut g, v);
                g.value(o).item()
            },
            &x,
        );
        let err = analytic.max_abs_diff(&numeric);
        assert!(err < 1e-6, "gradient mismatch {err}: {analytic:?} vs {numeric:?}");
    }

    #[test]
    fn broadcast_mul_and_sum() {
        let w = sample(&[4], 0.3);
        check(
            move |g, x| {
                let c = g.constant(w.clone());
                let y = g.mul(x, c);
                let y = g.tanh(y);
                g.sum(y)
            },
            sample(&[2, 3, 4], 0.1),
        );
    }

    #[test]
    fn broadcast_rhs_gradient() {
        let x = sample(&[2, 3, 4], 0.7);
        check(
            move |g, b| {
                let c = g.constant(x.clone());
                let y = g.sub(c, b);
                let y = g.square(y);
                g.sum(y)
            },
            sample(&[3, 1], 0.2),
        );
    }

    #[test]
    fn batched_and_shared_matmul() {
        let w = sample(&[4, 5], 0.9);
        check(
            move |g, x| {
                let wc = g.constant(w.clone());
                let y = g.matmul(x, wc);
                let yt = g.transpose(y);
                let z = g.matmul(y, yt);
                let z = g.tanh(z);
                g.sum(z)
            },
            sample(&[2, 3, 4], 0.4),
        );
        let x = sample(&[2, 3, 4], 0.4);
        check(
            move |g, w| {
                let xc = g.constant(x.clone());
                let y = g.matmul(xc, w);
                let y = g.tanh(y);
                g.sum(y)
            },
            sample(&[4, 5], 0.9),
        );
    }

    #[test]
    fn softmax_and_log_softmax() {
        let wt = sample(&[3, 4], 1.1);
        check(
            move |g, x| {
                let w = g.constant(wt.clone());
                let s = g.softmax(x);
                let l = g.log_softmax(x);
                let a = g.mul(s, w);
                let b = g.mul(l, w);
                let c = g.add(a, b);
                g.sum(c)
            },
            sample(&[3, 4], 0.5),
        );
    }

    #[test]
    fn shape_ops() {
        check(
            |g, x| {
                let p = g.permute(x, &[2, 0, 1]);
                let r = g.reshape(p, &[4, 6]);
                let n = g.narrow(r, 1, 2, 3);
                let m = g.mean_axis(r, 1);
                let c = g.concat(&[n, m], 1);
                let c = g.exp(c);
                let s = g.sum_axis(c, 0);
                let s = g.powf(s, 1.5);
                let s = g.log(s);
                g.mean(s)
            },
            sample(&[2, 3, 4], 0.8),
        );
    }

    #[test]
    fn division() {
        let d = sample(&[3], 2.0).map(|v| v + 2.0);
        check(
            move |g, x| {
                let dv = g.leaf(d.clone());
                let q = g.div(x, dv);
                let q2 = g.div(dv, x);
                let s = g.add(q, q2);
                g.sum(s)
            },
            sample(&[2, 3], 0.1).map(|v| v + 3.0),
        );
    }

    #[test]
    fn straight_through_passes_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![0.3, 0.7]).unwrap());
        let st = g.straight_through(Tensor::new(vec![2], vec![0.0, 1.0]).unwrap(), x);
        assert_eq!(g.value(st).data(), &[0.0, 1.0]);
        let w = g.constant(Tensor::new(vec![2], vec![2.0, 3.0]).unwrap());
        let y = g.mul(st, w);
        let y = g.sum(y);
        let grads = g.backward(y);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let d = g.detach(x);
        let y = g.mul(x, d);
        let grads = g.backward(y);
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }
}
