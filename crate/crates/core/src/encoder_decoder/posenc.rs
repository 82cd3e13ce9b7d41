//! Fixed temporal and learned spatial positional embeddings.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::graph_data::GraphSpec;
use crate::nn::{row_normalize, Linear};
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `P × d` sinusoidal table for positions `0..p` with `L_x = p`.
pub fn temporal_pe(p: usize, d_model: usize) -> Result<Tensor> {
    temporal_pe_at(0, p, p, d_model)
}

/// Rows for positions `offset..offset + len` of a table built with length scale `l_x`.
pub fn temporal_pe_at(offset: usize, len: usize, l_x: usize, d_model: usize) -> Result<Tensor> {
    if d_model % 2 != 0 {
        return Err(Error::Config(format!("model width must be even for positional tables, got {d_model}")));
    }
    let base = 2.0 * l_x.max(1) as f64;
    Ok(Tensor::from_fn(&[len, d_model], |ix| {
        let tau = (offset + ix[0]) as f64;
        let j = (ix[1] / 2) as f64;
        let arg = tau / base.powf(2.0 * j / d_model as f64);
        if ix[1] % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    }))
}

/// Geometrically spaced wavelengths from `gamma_min` to `gamma_max`.
pub fn geometric_scales(gamma_min: f64, gamma_max: f64, n_scales: usize) -> Result<Vec<f64>> {
    if !(gamma_min > 0.0 && gamma_min < gamma_max) {
        return Err(Error::Config(format!(
            "coordinate scales need 0 < gamma_min < gamma_max, got {gamma_min}, {gamma_max}"
        )));
    }
    if n_scales < 2 {
        return Err(Error::Config("at least two coordinate scales are required".into()));
    }
    let ratio = gamma_max / gamma_min;
    Ok((0..n_scales)
        .map(|s| gamma_min * ratio.powf(s as f64 / (n_scales - 1) as f64))
        .collect())
}

/// `N × 4S` sin/cos features of each coordinate at each scale.
pub fn coordinate_features(coords: &Tensor, scales: &[f64]) -> Tensor {
    let n = coords.dim(0);
    Tensor::from_fn(&[n, 4 * scales.len()], |ix| {
        let s = ix[1] / 4;
        let axis = (ix[1] / 2) % 2;
        let arg = coords.at(&[ix[0], axis]) / scales[s];
        if ix[1] % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    })
}

/// Coordinate sinusoids, an affine map to `d_model`, then one propagation
/// step over the row-normalized connectivity.
#[derive(Clone, Debug)]
pub struct SpatialEmbedding {
    pub embed: Linear,
    pub propagate: Linear,
    pub scales: Vec<f64>,
}

impl SpatialEmbedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        gamma_min: f64,
        gamma_max: f64,
        n_scales: usize,
        d_model: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let scales = geometric_scales(gamma_min, gamma_max, n_scales)?;
        Ok(Self {
            embed: Linear::new(store, &format!("{name}.embed"), 4 * n_scales, d_model, rng),
            propagate: Linear::no_bias(store, &format!("{name}.gcn"), d_model, d_model, rng),
            scales,
        })
    }

    /// `N × d_model`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, graph: &GraphSpec) -> Var {
        let feats = g.constant(coordinate_features(&graph.coords, &self.scales));
        let emb = self.embed.forward(g, p, feats);
        let a = g.constant(row_normalize(&graph.a_con));
        let smoothed = g.matmul(a, emb);
        self.propagate.forward(g, p, smoothed)
    }
}
