//! Mutual-view prediction and semantic contextual contrast.

mod filter;
mod losses;

pub use filter::{
    build_negative_filter, build_negative_filter_with, js_similarity, FilterBank, NegativeFilter, NeighborSource,
};
pub use losses::{
    basic_graph_contrastive_loss, info_nce_rows, semantic_contextual_loss, sts_loss, unit_rows, ContrastiveHeads,
    ProjectionHead,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use crate::params::{init_normal, Bound, ParamStore};
    use crate::rng;
    use crate::tensor::Tensor;

    fn eval(f: impl FnOnce(&mut Graph) -> crate::autograd::Var) -> f64 {
        let mut g = Graph::new();
        let v = f(&mut g);
        g.value(v).item()
    }

    #[test]
    fn uniform_scores_give_log_m() {
        for m in [2usize, 5, 9] {
            let l = eval(|g| {
                let x = g.constant(Tensor::full(&[m, m], 3.7));
                info_nce_rows(g, x)
            });
            assert!((l - (m as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_scores_near_zero() {
        let l = eval(|g| {
            let x = g.constant(Tensor::from_fn(&[4, 4], |ix| if ix[0] == ix[1] { 10.0 } else { -10.0 }));
            info_nce_rows(g, x)
        });
        let closed = (1.0 + 3.0 * (-20f64).exp()).ln();
        assert!((l - closed).abs() < 1e-15);
        assert!(l < 1e-6);
    }

    #[test]
    fn shift_invariance_and_monotonicity() {
        let base = init_normal(&mut rng::rng(1), &[5, 5], 1.0);
        let run = |t: Tensor| eval(|g| {
            let x = g.constant(t);
            info_nce_rows(g, x)
        });
        let l0 = run(base.clone());
        assert!((run(base.map(|v| v + 17.0)) - l0).abs() < 1e-12);
        let mut up = base.clone();
        up.set(&[2, 2], base.at(&[2, 2]) + 0.5);
        assert!(run(up) < l0);
    }

    fn heads(store: &mut ParamStore, d: usize, k: usize) -> ContrastiveHeads {
        ContrastiveHeads::new(store, "cl", d, k, 4, 0.1, &mut rng::rng(2)).unwrap()
    }

    #[test]
    fn sts_loss_with_identity_maps() {
        let mut store = ParamStore::new();
        let h = heads(&mut store, 3, 2);
        for w in &h.predictors {
            store.get_mut(w.w).data_mut().copy_from_slice(Tensor::eye(3).data());
        }
        let c = init_normal(&mut rng::rng(4), &[2, 2, 3], 1.0);
        let z = init_normal(&mut rng::rng(5), &[2, 2, 2, 3], 1.0);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let (cv, zv) = (g.constant(c.clone()), g.constant(z.clone()));
        let l = sts_loss(&mut g, &p, &h, cv, zv).unwrap();
        let got = g.value(l).item();

        let mut expected = 0.0;
        for k in 0..2 {
            for a in 0..4 {
                let dots: Vec<f64> = (0..4)
                    .map(|b| (0..3).map(|f| c.data()[a * 3 + f] * z.at(&[b / 2, k, b % 2, f])).sum())
                    .collect();
                let lse = dots.iter().map(|d| d.exp()).sum::<f64>().ln();
                expected += lse - dots[a];
            }
        }
        expected /= 8.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn sts_loss_rejects_empty_horizon() {
        let mut store = ParamStore::new();
        let h = heads(&mut store, 3, 1);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let c = g.constant(Tensor::zeros(&[1, 2, 3]));
        let z = g.constant(Tensor::zeros(&[1, 0, 2, 3]));
        assert!(sts_loss(&mut g, &p, &h, c, z).is_err());
    }

    #[test]
    fn semantic_loss_closed_form() {
        // node 0 matches itself; nodes 1 and 2 point the opposite way
        let hb = Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![-2.0, 0.0]]).unwrap();
        let filter = NegativeFilter {
            allowed: vec![vec![1, 2], vec![], vec![]],
            u: 0,
            spatial_excluded: vec![vec![]; 3],
            semantic_excluded: vec![vec![]; 3],
            fallback: vec![],
        };
        let l = eval(|g| {
            let (a, b) = (g.constant(hb.clone()), g.constant(hb.clone()));
            semantic_contextual_loss(g, a, b, &[&filter], 1.0).unwrap()
        });
        let node0 = -(1f64.exp() / (1f64.exp() + 2.0 * (-1f64).exp())).ln();
        assert!((l - node0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_negative_sets_give_zero() {
        let f = NegativeFilter {
            allowed: vec![vec![]; 4],
            u: 0,
            spatial_excluded: vec![vec![]; 4],
            semantic_excluded: vec![vec![]; 4],
            fallback: vec![],
        };
        let a = init_normal(&mut rng::rng(1), &[4, 3], 1.0);
        let b = init_normal(&mut rng::rng(2), &[4, 3], 1.0);
        let l = eval(|g| {
            let (x, y) = (g.constant(a), g.constant(b));
            semantic_contextual_loss(g, x, y, &[&f], 0.1).unwrap()
        });
        assert_eq!(l, 0.0);
    }

    #[test]
    fn semantic_loss_scale_invariant() {
        let f = NegativeFilter::unfiltered(5);
        let a = init_normal(&mut rng::rng(1), &[5, 3], 1.0);
        let b = init_normal(&mut rng::rng(2), &[5, 3], 1.0);
        let mut scaled = a.clone();
        for v in &mut scaled.data_mut()[3..6] {
            *v *= 7.5;
        }
        let run = |x: Tensor| eval(|g| {
            let (x, y) = (g.constant(x), g.constant(b.clone()));
            semantic_contextual_loss(g, x, y, &[&f], 0.1).unwrap()
        });
        assert!((run(a) - run(scaled)).abs() < 1e-12);
    }

    #[test]
    fn zero_row_is_domain_error() {
        let f = NegativeFilter::unfiltered(2);
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap());
        let b = g.constant(Tensor::ones(&[2, 2]));
        assert!(matches!(
            semantic_contextual_loss(&mut g, a, b, &[&f], 0.1),
            Err(crate::Error::Domain(_))
        ));
    }

    /// Scalar-loop NT-Xent.
    fn nt_xent_oracle(a: &Tensor, b: &Tensor, sigma: f64) -> f64 {
        let n = a.dim(0);
        let cos = |i: usize, j: usize| {
            let (x, y) = (a.row(i), b.row(j));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            dot / (nx * ny)
        };
        (0..n)
            .map(|i| {
                let denom: f64 = (0..n).map(|j| (cos(i, j) / sigma).exp()).sum();
                -((cos(i, i) / sigma).exp() / denom).ln()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn unfiltered_semantic_loss_matches_nt_xent() {
        for seed in 0..5 {
            let a = init_normal(&mut rng::rng(seed), &[6, 4], 1.0);
            let b = init_normal(&mut rng::rng(seed + 100), &[6, 4], 1.0);
            let f = NegativeFilter::unfiltered(6);
            let sc = eval(|g| {
                let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
                semantic_contextual_loss(g, x, y, &[&f], 0.1).unwrap()
            });
            let nt = eval(|g| {
                let (x, y) = (g.constant(a.clone()), g.constant(b.clone()));
                basic_graph_contrastive_loss(g, x, y, 0.1).unwrap()
            });
            assert!((sc - nt).abs() < 1e-9);
            assert!((nt - nt_xent_oracle(&a, &b, 0.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn nt_xent_edge_cases() {
        let one = Tensor::from_rows(&[vec![0.3, -2.0]]).unwrap();
        let l = eval(|g| {
            let (x, y) = (g.constant(one.clone()), g.constant(one.clone()));
            basic_graph_contrastive_loss(g, x, y, 0.5).unwrap()
        });
        assert_eq!(l, 0.0);
        let same = Tensor::ones(&[4, 2]);
        let at = |sigma| eval(|g| {
            let (x, y) = (g.constant(same.clone()), g.constant(same.clone()));
            basic_graph_contrastive_loss(g, x, y, sigma).unwrap()
        });
        assert!((at(0.5) - at(1.0)).abs() < 1e-12);
        assert!((at(0.5) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn projection_head_shapes_and_zero() {
        let mut store = ParamStore::new();
        let h = heads(&mut store, 6, 1);
        let x = init_normal(&mut rng::rng(3), &[2, 5, 6], 1.0);
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let xv = g.constant(x.clone());
        let y = h.proj.forward(&mut g, &p, xv);
        assert_eq!(g.value(y).shape(), &[2, 5, 4]);
        for id in [h.proj.l1.w, h.proj.l2.w] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let p = Bound::frozen(&mut g, &store);
        let xv = g.constant(x);
        let y = h.proj.forward(&mut g, &p, xv);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }
}
