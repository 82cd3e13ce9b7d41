//! Layer building blocks shared by the encoder, decoder, heads and view generator.

use crate::autograd::{Graph, Var};
use crate::params::{init_weight, Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let w = store.add(format!("{name}.w"), init_weight(rng, d_in, d_out));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[d_out]));
        Self {
            w,
            b: Some(b),
            d_in,
            d_out,
        }
    }

    pub fn no_bias(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let w = store.add(format!("{name}.w"), init_weight(rng, d_in, d_out));
        Self {
            w,
            b: None,
            d_in,
            d_out,
        }
    }

    /// `x[..., d_in] -> [..., d_out]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.w));
        match self.b {
            Some(b) => g.add(y, p.var(b)),
            None => y,
        }
    }

    /// Apply to an input of arbitrary rank by flattening the leading axes.
    pub fn forward_nd(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let shape = g.shape(x).to_vec();
        if shape.len() <= 3 {
            return self.forward(g, p, x);
        }
        let lead: usize = shape[..shape.len() - 1].iter().product();
        let flat = g.reshape(x, &[lead, self.d_in]);
        let y = self.forward(g, p, flat);
        let mut out = shape;
        *out.last_mut().unwrap() = self.d_out;
        g.reshape(y, &out)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::ones(&[d])),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let last = g.shape(x).len() - 1;
        let mu = g.mean_axis(x, last);
        let c = g.sub(x, mu);
        let sq = g.square(c);
        let var = g.mean_axis(sq, last);
        let var = g.add_scalar(var, self.eps);
        let inv = g.powf(var, -0.5);
        let xhat = g.mul(c, inv);
        let y = g.mul(xhat, p.var(self.gain));
        g.add(y, p.var(self.bias))
    }
}

/// Row-normalize a non-negative square matrix (plain tensor, no gradient).
pub fn row_normalize(a: &Tensor) -> Tensor {
    let n = a.dim(0);
    let mut out = a.clone();
    for i in 0..n {
        let s: f64 = a.row(i).iter().sum();
        if s > 0.0 {
            for j in 0..a.dim(1) {
                out.data_mut()[i * a.dim(1) + j] /= s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut store = ParamStore::new();
        let ln = LayerNorm::new(&mut store, "ln", 4);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let x = g.constant(Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 8.0]).unwrap());
        let y = ln.forward(&mut g, &p, x);
        for r in g.value(y).data().chunks(4) {
            let m: f64 = r.iter().sum::<f64>() / 4.0;
            let v: f64 = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn linear_nd_matches_flat() {
        let mut store = ParamStore::new();
        let mut r = rng::rng(3);
        let lin = Linear::new(&mut store, "l", 3, 2, &mut r);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let x = Tensor::from_fn(&[2, 2, 2, 3], |ix| ix.iter().sum::<usize>() as f64 * 0.1);
        let xv = g.constant(x.clone());
        let y = lin.forward_nd(&mut g, &p, xv);
        assert_eq!(g.shape(y), &[2, 2, 2, 2]);
        let flat = g.constant(x.reshape(&[8, 3]).unwrap());
        let y2 = lin.forward(&mut g, &p, flat);
        assert_eq!(g.value(y).data(), g.value(y2).data());
    }
}
