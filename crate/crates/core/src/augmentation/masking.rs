use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub(crate) fn check_rate(name: &str, rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("{name} must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Remove `⌊rate · E⌋` of the `E` undirected off-diagonal edges, symmetrically.
pub fn edge_mask(a_con: &Tensor, rate: f64, seed: u64) -> Result<Tensor> {
    check_rate("edge mask rate", rate)?;
    if a_con.ndim() != 2 || a_con.dim(0) != a_con.dim(1) {
        return Err(Error::Shape(format!("adjacency must be square, got {:?}", a_con.shape())));
    }
    let n = a_con.dim(0);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a_con.at(&[i, j]) != 0.0)
        .collect();
    let drop = (rate * edges.len() as f64 + 1e-9).floor() as usize;
    let mut out = a_con.clone();
    let mut r = rng::rng(seed);
    for e in index::sample(&mut r, edges.len(), drop) {
        let (i, j) = edges[e];
        out.set(&[i, j], 0.0);
        out.set(&[j, i], 0.0);
    }
    Ok(out)
}

/// Flat positions zeroed by [`attr_mask`] for a tensor of `len` entries.
pub fn attr_mask_positions(len: usize, rate: f64, seed: u64) -> Result<Vec<usize>> {
    check_rate("attribute mask rate", rate)?;
    let count = (rate * len as f64 + 1e-9).floor() as usize;
    let mut idx = index::sample(&mut rng::rng(seed), len, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Zero `⌊rate · len⌋` uniformly chosen entries; the rest are untouched.
pub fn attr_mask(x: &Tensor, rate: f64, seed: u64) -> Result<Tensor> {
    let mut out = x.clone();
    for i in attr_mask_positions(x.len(), rate, seed)? {
        out.data_mut()[i] = 0.0;
    }
    Ok(out)
}
