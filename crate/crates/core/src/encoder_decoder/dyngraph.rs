//! Input-conditioned adjacency and the graph convolution that consumes it.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::gumbel::{gumbel_softmax, tempered_softmax};

/// Diffusion convolution over the pooled representation, an MLP, and
/// pairwise scaled dot-product scores.
#[derive(Clone, Debug)]
pub struct DynamicGraphGenerator {
    /// One weight per diffusion power `0..=K_d`.
    pub diffusion: Vec<Linear>,
    /// Layers with `tanh` between them; empty means identity.
    pub mlp: Vec<Linear>,
}

#[derive(Clone, Copy, Debug)]
pub struct DynamicAdjacency {
    /// Row softmax of the pairwise scores.
    pub probabilities: Var,
    /// Tempered (and optionally Gumbel-perturbed) resampling of `probabilities`.
    pub a_dyn: Var,
}

impl DynamicGraphGenerator {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        diffusion_steps: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let diffusion = (0..=diffusion_steps)
            .map(|k| Linear::no_bias(store, &format!("{name}.dgc{k}"), d_model, hidden, rng))
            .collect();
        let mlp = vec![
            Linear::new(store, &format!("{name}.mlp1"), hidden, hidden, rng),
            Linear::new(store, &format!("{name}.mlp2"), hidden, hidden, rng),
        ];
        Self { diffusion, mlp }
    }

    /// `z: [B, L, N, D]`, `adjacency: [N, N]`. With `noise_seed` the rows are
    /// Gumbel-perturbed before tempering; without it the map is deterministic.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        adjacency: Var,
        omega: f64,
        noise_seed: Option<u64>,
    ) -> Result<DynamicAdjacency> {
        let s = g.shape(z).to_vec();
        let (n, d) = (s[2], s[3]);
        let pooled = g.mean_axis(z, 0);
        let pooled = g.mean_axis(pooled, 1);
        let pooled = g.reshape(pooled, &[n, d]);

        let rows = g.sum_axis(adjacency, 1);
        let transition = g.div(adjacency, rows);
        let mut power = pooled;
        let mut h = self.diffusion[0].forward(g, p, power);
        for w in &self.diffusion[1..] {
            power = g.matmul(transition, power);
            let term = w.forward(g, p, power);
            h = g.add(h, term);
        }
        for (i, layer) in self.mlp.iter().enumerate() {
            if i > 0 {
                h = g.tanh(h);
            }
            h = layer.forward(g, p, h);
        }
        let width = *g.shape(h).last().unwrap();
        let ht = g.transpose(h);
        let scores = g.matmul(h, ht);
        let scores = g.scale(scores, 1.0 / (width as f64).sqrt());
        if !g.value(scores).is_finite() {
            return Err(Error::Numerical("non-finite pairwise adjacency scores".into()));
        }
        let log_p = g.log_softmax(scores);
        let probabilities = g.softmax(scores);
        let a_dyn = match noise_seed {
            Some(seed) => gumbel_softmax(g, log_p, omega, false, seed)?,
            None => tempered_softmax(g, log_p, omega)?,
        };
        Ok(DynamicAdjacency { probabilities, a_dyn })
    }
}

/// Rows of `a` normalized to sum 1; all-zero rows become a self-loop.
pub fn renormalize_rows(g: &mut Graph, a: Var) -> Var {
    let n = g.shape(a)[0];
    let sums = g.value(a).data().chunks(n).map(|r| r.iter().sum::<f64>()).collect::<Vec<_>>();
    let a = if sums.iter().any(|&s| s.abs() < 1e-12) {
        let fill = Tensor::from_fn(&[n, n], |ix| if ix[0] == ix[1] && sums[ix[0]].abs() < 1e-12 { 1.0 } else { 0.0 });
        let fill = g.constant(fill);
        g.add(a, fill)
    } else {
        a
    };
    let rows = g.sum_axis(a, 1);
    g.div(a, rows)
}

/// `tanh(renorm(adjacency ⊙ a_dyn) · x · W)`. Returns the output and the
/// unnormalized elementwise product.
pub fn di_gcn(g: &mut Graph, p: &Bound, x: Var, adjacency: Var, a_dyn: Var, weight: &Linear) -> (Var, Var) {
    let fused = g.mul(adjacency, a_dyn);
    let norm = renormalize_rows(g, fused);
    let mixed = g.matmul(norm, x);
    let y = weight.forward(g, p, mixed);
    (g.tanh(y), fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_normal;
    use crate::rng;

    fn row_sums(t: &Tensor) -> Vec<f64> {
        t.data().chunks(t.dim(1)).map(|r| r.iter().sum()).collect()
    }

    #[test]
    fn rows_are_stochastic() {
        let mut store = ParamStore::new();
        let gen = DynamicGraphGenerator::new(&mut store, "dg", 6, 2, 5, &mut rng::rng(1));
        let z = init_normal(&mut rng::rng(2), &[2, 3, 5, 6], 1.0);
        let a = Tensor::from_fn(&[5, 5], |ix| if ix[0].abs_diff(ix[1]) <= 1 { 1.0 } else { 0.0 });
        for noise in [None, Some(4)] {
            let mut g = Graph::new();
            let p = Bound::frozen(&mut g, &store);
            let (zv, av) = (g.constant(z.clone()), g.constant(a.clone()));
            let out = gen.forward(&mut g, &p, zv, av, 0.5, noise).unwrap();
            for s in row_sums(g.value(out.a_dyn)).into_iter().chain(row_sums(g.value(out.probabilities))) {
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identical_nodes_identical_rows() {
        let mut store = ParamStore::new();
        let gen = DynamicGraphGenerator::new(&mut store, "dg", 4, 2, 4, &mut rng::rng(1));
        let z = Tensor::from_fn(&[2, 3, 4, 4], |ix| (ix[0] + 2 * ix[1] + 3 * ix[3]) as f64 * 0.1);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let (zv, av) = (g.constant(z), g.constant(Tensor::ones(&[4, 4])));
        let out = gen.forward(&mut g, &p, zv, av, 0.5, None).unwrap();
        let a = g.value(out.a_dyn);
        for i in 1..4 {
            assert!(a.row(i).iter().zip(a.row(0)).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn identity_mlp_matches_pooled_softmax() {
        let mut store = ParamStore::new();
        let mut gen = DynamicGraphGenerator::new(&mut store, "dg", 3, 0, 3, &mut rng::rng(1));
        gen.mlp.clear();
        store.get_mut(gen.diffusion[0].w).data_mut().copy_from_slice(Tensor::eye(3).data());
        let z = init_normal(&mut rng::rng(7), &[2, 4, 3, 3], 1.0);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let (zv, av) = (g.constant(z.clone()), g.constant(Tensor::eye(3)));
        let out = gen.forward(&mut g, &p, zv, av, 0.5, None).unwrap();
        let got = g.value(out.probabilities);

        let zbar = |i: usize, c: usize| {
            let mut s = 0.0;
            for b in 0..2 {
                for t in 0..4 {
                    s += z.at(&[b, t, i, c]);
                }
            }
            s / 8.0
        };
        for i in 0..3 {
            let sc: Vec<f64> = (0..3)
                .map(|j| (0..3).map(|c| zbar(i, c) * zbar(j, c)).sum::<f64>() / 3f64.sqrt())
                .collect();
            let z: f64 = sc.iter().map(|s| s.exp()).sum();
            for j in 0..3 {
                assert!((got.at(&[i, j]) - sc[j].exp() / z).abs() < 1e-12);
            }
        }
    }

    fn gcn_weight(store: &mut ParamStore, w: &[f64], d_in: usize, d_out: usize) -> Linear {
        let lin = Linear::no_bias(store, "w", d_in, d_out, &mut rng::rng(0));
        store.get_mut(lin.w).data_mut().copy_from_slice(w);
        lin
    }

    fn run_gcn(store: &ParamStore, lin: &Linear, x: &Tensor, a: &Tensor, a_dyn: &Tensor) -> (Tensor, Tensor) {
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, store);
        let (xv, av, dv) = (g.constant(x.clone()), g.constant(a.clone()), g.constant(a_dyn.clone()));
        let (o, f) = di_gcn(&mut g, &p, xv, av, dv, lin);
        (g.value(o).clone(), g.value(f).clone())
    }

    #[test]
    fn three_node_path_by_hand() {
        let mut store = ParamStore::new();
        let lin = gcn_weight(&mut store, &[1.0, -0.5, 0.25, 2.0], 2, 2);
        let a = Tensor::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let a_dyn = Tensor::from_rows(&[vec![0.5, 0.25, 0.25], vec![0.2, 0.6, 0.2], vec![0.1, 0.1, 0.8]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let (out, fused) = run_gcn(&store, &lin, &x, &a, &a_dyn);
        // row 0: (0.5, 0.25, 0) / 0.75; row 1 unchanged; row 2: (0, 0.1, 0.8) / 0.9
        let norm = [[2.0 / 3.0, 1.0 / 3.0, 0.0], [0.2, 0.6, 0.2], [0.0, 1.0 / 9.0, 8.0 / 9.0]];
        let w = [[1.0, -0.5], [0.25, 2.0]];
        for i in 0..3 {
            let mixed: Vec<f64> = (0..2).map(|c| (0..3).map(|j| norm[i][j] * x.at(&[j, c])).sum()).collect();
            for c in 0..2 {
                let pre: f64 = (0..2).map(|m| mixed[m] * w[m][c]).sum();
                assert!((out.at(&[i, c]) - pre.tanh()).abs() < 1e-12);
            }
        }
        assert_eq!(fused.at(&[0, 2]), 0.0);
        assert_eq!(fused.at(&[0, 1]), 0.25);
    }

    #[test]
    fn full_connectivity_leaves_a_dyn() {
        let mut store = ParamStore::new();
        let lin = gcn_weight(&mut store, &[1.0], 1, 1);
        let a_dyn = Tensor::from_rows(&[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        let (_, fused) = run_gcn(&store, &lin, &Tensor::ones(&[2, 1]), &Tensor::ones(&[2, 2]), &a_dyn);
        assert_eq!(fused, a_dyn);
    }

    #[test]
    fn identity_connectivity_is_local() {
        let mut store = ParamStore::new();
        let lin = gcn_weight(&mut store, &[0.7], 1, 1);
        let a_dyn = Tensor::full(&[3, 3], 1.0 / 3.0);
        let x = Tensor::new(vec![3, 1], vec![1.0, -2.0, 0.5]).unwrap();
        let (out, _) = run_gcn(&store, &lin, &x, &Tensor::eye(3), &a_dyn);
        for i in 0..3 {
            assert!((out.at(&[i, 0]) - (0.7 * x.at(&[i, 0])).tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rows_fall_back_to_self() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![0.4, 0.4]]).unwrap());
        let r = renormalize_rows(&mut g, a);
        assert_eq!(g.value(r).data(), &[1.0, 0.0, 0.5, 0.5]);
    }
}
