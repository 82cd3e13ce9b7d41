//! Dense and ProbSparse multi-head attention.

use rand::Rng as _;

use crate::autograd::{Graph, Var};
use crate::nn::Linear;
use crate::params::{Bound, ParamStore};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Sequences at or below this length always use dense attention.
pub const DENSE_FALLBACK_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttentionKind {
    Dense { causal: bool },
    ProbSparse { factor: f64, seed: u64 },
}

/// Additive mask hiding future keys from each query.
pub fn causal_mask(lq: usize, lk: usize) -> Tensor {
    Tensor::from_fn(&[lq, lk], |ix| if ix[1] > ix[0] { -1e30 } else { 0.0 })
}

/// `softmax(q kᵀ / √d + mask) v` for `q: [S, Lq, d]`, `k, v: [S, Lk, d]`.
pub fn dense_attention(g: &mut Graph, q: Var, k: Var, v: Var, mask: Option<&Tensor>) -> Var {
    let d = *g.shape(q).last().unwrap();
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt);
    let mut scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    if let Some(m) = mask {
        let m = g.constant(m.clone());
        scores = g.add(scores, m);
    }
    let att = g.softmax(scores);
    g.matmul(att, v)
}

/// Number of active queries `min(L, ⌈c ln L⌉)`.
pub fn active_queries(len: usize, factor: f64) -> usize {
    let u = (factor * (len as f64).ln()).ceil().max(1.0) as usize;
    u.min(len)
}

/// ProbSparse self-attention: dense for short sequences or when every query
/// would be active.
pub fn probsparse_attention(g: &mut Graph, q: Var, k: Var, v: Var, factor: f64, seed: u64) -> Var {
    let len = g.shape(q)[1];
    let u = active_queries(len, factor);
    if u >= len || len <= DENSE_FALLBACK_LEN {
        return dense_attention(g, q, k, v, None);
    }
    let n_sample = active_queries(g.shape(k)[1], factor);
    probsparse_with_u(g, q, k, v, u, n_sample, seed)
}

/// Sparsity score `max − mean` of each query's products with sampled keys.
fn sparsity_scores(q: &Tensor, k: &Tensor, n_sample: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let (s, lq, d) = (q.dim(0), q.dim(1), q.dim(2));
    let lk = k.dim(1);
    (0..s)
        .map(|si| {
            (0..lq)
                .map(|i| {
                    let qi = &q.data()[(si * lq + i) * d..(si * lq + i + 1) * d];
                    let mut max = f64::NEG_INFINITY;
                    let mut sum = 0.0;
                    for _ in 0..n_sample {
                        let j = rng.gen_range(0..lk);
                        let kj = &k.data()[(si * lk + j) * d..(si * lk + j + 1) * d];
                        let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                        max = max.max(dot);
                        sum += dot;
                    }
                    max - sum / n_sample as f64
                })
                .collect()
        })
        .collect()
}

/// ProbSparse attention with an explicit number of active queries `u`.
/// Active queries attend densely; the others output the mean of `v`.
pub fn probsparse_with_u(g: &mut Graph, q: Var, k: Var, v: Var, u: usize, n_sample: usize, seed: u64) -> Var {
    let (s, lq) = (g.shape(q)[0], g.shape(q)[1]);
    let u = u.min(lq);
    let mut r = rng::rng(seed);
    let scores = sparsity_scores(g.value(q), g.value(k), n_sample.max(1), &mut r);
    let mut select = Tensor::zeros(&[s, u, lq]);
    let mut idle = Tensor::ones(&[s, lq, 1]);
    for (si, m) in scores.iter().enumerate() {
        let mut order: Vec<usize> = (0..lq).collect();
        // stable sort keeps the lower index first on ties
        order.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap_or(std::cmp::Ordering::Equal));
        for (slot, &i) in order[..u].iter().enumerate() {
            select.set(&[si, slot, i], 1.0);
            idle.set(&[si, i, 0], 0.0);
        }
    }
    let scatter = g.constant(select.permute(&[0, 2, 1]));
    let select = g.constant(select);
    let q_active = g.matmul(select, q);
    let active = dense_attention(g, q_active, k, v, None);
    let placed = g.matmul(scatter, active);
    let mean_v = g.mean_axis(v, 1);
    let idle = g.constant(idle);
    let filler = g.mul(idle, mean_v);
    g.add(placed, filler)
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, n_heads: usize, rng: &mut Rng) -> Self {
        assert_eq!(d_model % n_heads, 0, "model width must divide into heads");
        Self {
            wq: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            wk: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            wv: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            wo: Linear::new(store, &format!("{name}.o"), d_model, d_model, rng),
            n_heads,
            d_model,
        }
    }

    fn split(&self, g: &mut Graph, x: Var) -> Var {
        let (s, l) = (g.shape(x)[0], g.shape(x)[1]);
        let h = self.n_heads;
        let x = g.reshape(x, &[s, l, h, self.d_model / h]);
        let x = g.permute(x, &[0, 2, 1, 3]);
        g.reshape(x, &[s * h, l, self.d_model / h])
    }

    /// `query: [S, Lq, D]`, `memory: [S, Lk, D]` to `[S, Lq, D]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, query: Var, memory: Var, kind: AttentionKind) -> Var {
        let (s, lq) = (g.shape(query)[0], g.shape(query)[1]);
        let lk = g.shape(memory)[1];
        let q = self.wq.forward(g, p, query);
        let k = self.wk.forward(g, p, memory);
        let v = self.wv.forward(g, p, memory);
        let (q, k, v) = (self.split(g, q), self.split(g, k), self.split(g, v));
        let out = match kind {
            AttentionKind::Dense { causal } => {
                let mask = causal.then(|| causal_mask(lq, lk));
                dense_attention(g, q, k, v, mask.as_ref())
            }
            AttentionKind::ProbSparse { factor, seed } => probsparse_attention(g, q, k, v, factor, seed),
        };
        let h = self.n_heads;
        let out = g.reshape(out, &[s, h, lq, self.d_model / h]);
        let out = g.permute(out, &[0, 2, 1, 3]);
        let out = g.reshape(out, &[s, lq, self.d_model]);
        self.wo.forward(g, p, out)
    }
}
