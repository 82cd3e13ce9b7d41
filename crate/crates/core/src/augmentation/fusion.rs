use rand::Rng as _;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::graph_data::WindowBatch;
use crate::rng;
use crate::tensor::Tensor;

/// Day and week blending weights drawn for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl FusionWeights {
    pub const NONE: Self = Self { alpha: 0.0, beta: 0.0 };

    /// Draw `α, β ~ U(δ, 1) / 2`.
    pub fn sample(delta_ts: f64, seed: u64) -> Result<Self> {
        if !(delta_ts > 0.0 && delta_ts < 1.0) {
            return Err(Error::Config(format!("delta_ts must lie in (0, 1), got {delta_ts}")));
        }
        let mut r = rng::rng(seed);
        let alpha = r.gen_range(delta_ts..1.0) / 2.0;
        let beta = r.gen_range(delta_ts..1.0) / 2.0;
        Ok(Self { alpha, beta })
    }

    /// Per-sample `(history, day, week)` coefficients; a flagged lag loses its
    /// weight to the history term.
    pub fn per_sample(&self, batch: &WindowBatch) -> Vec<[f64; 3]> {
        (0..batch.len())
            .map(|b| {
                let a = if batch.day_lag_copied[b] { 0.0 } else { self.alpha };
                let w = if batch.week_lag_copied[b] { 0.0 } else { self.beta };
                [1.0 - a - w, a, w]
            })
            .collect()
    }
}

fn coefficient_tensor(coefs: &[[f64; 3]], which: usize) -> Tensor {
    Tensor::from_fn(&[coefs.len(), 1, 1, 1], |ix| coefs[ix[0]][which])
}

/// `(1 − α − β) · history + α · day_lag + β · week_lag`, per sample.
pub fn fuse(history: &Tensor, batch: &WindowBatch, weights: FusionWeights) -> Tensor {
    let coefs = weights.per_sample(batch);
    let per = history.len() / batch.len().max(1);
    let mut out = history.clone();
    let (d, w) = (batch.day_lag.data(), batch.week_lag.data());
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = coefs[i / per];
        *v = c[0] * *v + c[1] * d[i] + c[2] * w[i];
    }
    out
}

/// Differentiable counterpart of [`fuse`] for a history produced inside a graph.
pub fn fuse_var(g: &mut Graph, history: Var, batch: &WindowBatch, weights: FusionWeights) -> Var {
    let coefs = weights.per_sample(batch);
    if coefs.iter().all(|c| c[0] == 1.0) {
        return history;
    }
    let ch = g.constant(coefficient_tensor(&coefs, 0));
    let h = g.mul(history, ch);
    let lags = Tensor::from_fn(batch.history.shape(), |ix| {
        let c = coefs[ix[0]];
        c[1] * batch.day_lag.at(ix) + c[2] * batch.week_lag.at(ix)
    });
    let lags = g.constant(lags);
    g.add(h, lags)
}

/// Sample fusion weights and blend the batch history.
pub fn temporal_scale_fusion(batch: &WindowBatch, delta_ts: f64, seed: u64) -> Result<(Tensor, FusionWeights)> {
    let w = FusionWeights::sample(delta_ts, seed)?;
    Ok((fuse(&batch.history, batch, w), w))
}
