use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::filter::NegativeFilter;

/// Two-layer `tanh` projection head.
#[derive(Clone, Debug)]
pub struct ProjectionHead {
    pub l1: Linear,
    pub l2: Linear,
}

impl ProjectionHead {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, d_proj: usize, rng: &mut Rng) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), d_model, d_model, rng),
            l2: Linear::new(store, &format!("{name}.l2"), d_model, d_proj, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, c: Var) -> Var {
        let h = self.l1.forward(g, p, c);
        let h = g.tanh(h);
        self.l2.forward(g, p, h)
    }
}

/// Per-horizon predictors and the projection head.
#[derive(Clone, Debug)]
pub struct ContrastiveHeads {
    pub predictors: Vec<Linear>,
    pub proj: ProjectionHead,
    pub delta: f64,
}

impl ContrastiveHeads {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        k: usize,
        d_proj: usize,
        delta: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("contrastive horizon must be at least 1".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::Config(format!("contrastive temperature must be positive, got {delta}")));
        }
        Ok(Self {
            predictors: (0..k)
                .map(|i| Linear::new(store, &format!("{name}.predict{i}"), d_model, d_model, rng))
                .collect(),
            proj: ProjectionHead::new(store, &format!("{name}.proj"), d_model, d_proj, rng),
            delta,
        })
    }
}

/// `−mean_i log softmax(logits)[i, i]` over the last two axes.
pub fn info_nce_rows(g: &mut Graph, logits: Var) -> Var {
    let s = g.shape(logits).to_vec();
    let m = s[s.len() - 1];
    let rows: usize = s[..s.len() - 1].iter().product();
    let ls = g.log_softmax(logits);
    let eye = g.constant(Tensor::eye(m));
    let diag = g.mul(ls, eye);
    let total = g.sum(diag);
    g.scale(total, -1.0 / rows as f64)
}

/// Each representation in `c: [B, N, D]` predicts, through the horizon-`k`
/// map, the other view's representation `z_other[:, k]`; every other
/// (sample, node) pair at that horizon is a negative.
pub fn sts_loss(g: &mut Graph, p: &Bound, heads: &ContrastiveHeads, c: Var, z_other: Var) -> Result<Var> {
    let cs = g.shape(c).to_vec();
    let zs = g.shape(z_other).to_vec();
    let k = zs.get(1).copied().unwrap_or(0);
    if k == 0 {
        return Err(Error::Config("contrastive horizon must be at least 1".into()));
    }
    if cs.len() != 3 || zs.len() != 4 || zs[0] != cs[0] || zs[2] != cs[1] || zs[3] != cs[2] {
        return Err(Error::Shape(format!("context {cs:?} does not match targets {zs:?}")));
    }
    if k > heads.predictors.len() {
        return Err(Error::Config(format!("{k} horizons but {} predictors", heads.predictors.len())));
    }
    let (b, n, d) = (cs[0], cs[1], cs[2]);
    let mut total = None;
    for (h, w) in heads.predictors.iter().take(k).enumerate() {
        let pred = w.forward(g, p, c);
        let pred = g.reshape(pred, &[b * n, d]);
        let target = g.narrow(z_other, 1, h, 1);
        let target = g.reshape(target, &[b * n, d]);
        let tt = g.transpose(target);
        let logits = g.matmul(pred, tt);
        let l = info_nce_rows(g, logits);
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    Ok(g.scale(total.expect("k >= 1"), 1.0 / k as f64))
}

/// Rows scaled to unit Euclidean norm; zero rows are rejected.
pub fn unit_rows(g: &mut Graph, h: Var) -> Result<Var> {
    let last = g.shape(h).len() - 1;
    let sq = g.square(h);
    let ss = g.sum_axis(sq, last);
    if g.value(ss).data().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("cosine similarity of a zero-norm representation".into()));
    }
    let norm = g.powf(ss, 0.5);
    Ok(g.div(h, norm))
}

fn cosine_logits(g: &mut Graph, a: Var, b: Var, temperature: f64) -> Result<Var> {
    let an = unit_rows(g, a)?;
    let bn = unit_rows(g, b)?;
    let bt = g.transpose(bn);
    let sim = g.matmul(an, bt);
    Ok(g.scale(sim, 1.0 / temperature))
}

/// Cosine-similarity contrast between the two views' projections, with the
/// positive in the denominator and negatives restricted by `filters`
/// (one per batch sample for `[B, N, d]` inputs, one for `[N, d]`).
pub fn semantic_contextual_loss(
    g: &mut Graph,
    h_b: Var,
    h_s: Var,
    filters: &[&NegativeFilter],
    delta: f64,
) -> Result<Var> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {delta}")));
    }
    let s = g.shape(h_b).to_vec();
    if s != g.shape(h_s) {
        return Err(Error::Shape(format!("projection shapes differ: {s:?} vs {:?}", g.shape(h_s))));
    }
    let n = s[s.len() - 2];
    let batch = if s.len() == 3 { s[0] } else { 1 };
    if filters.len() != batch || filters.iter().any(|f| f.len() != n) {
        return Err(Error::Shape(format!("need {batch} filters over {n} nodes")));
    }
    let logits = cosine_logits(g, h_b, h_s, delta)?;
    let masks: Vec<Tensor> = filters.iter().map(|f| f.logit_mask()).collect();
    let mask = if s.len() == 3 {
        Tensor::stack(&masks)?
    } else {
        masks.into_iter().next().unwrap()
    };
    let mask = g.constant(mask);
    let masked = g.add(logits, mask);
    Ok(info_nce_rows(g, masked))
}

/// NT-Xent between paired rows of `s_b` and `s_s`: every other row is a
/// negative and the positive sits in the denominator.
pub fn basic_graph_contrastive_loss(g: &mut Graph, s_b: Var, s_s: Var, sigma: f64) -> Result<Var> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {sigma}")));
    }
    let logits = cosine_logits(g, s_b, s_s, sigma)?;
    let n = g.shape(logits)[0];
    // logsumexp per row minus the diagonal, written without the masking path
    let rows = g.exp(logits);
    let denom = g.sum_axis(rows, 1);
    let lse = g.log(denom);
    let eye = g.constant(Tensor::eye(n));
    let pos = g.mul(logits, eye);
    let pos = g.sum_axis(pos, 1);
    let per = g.sub(lse, pos);
    Ok(g.mean(per))
}
