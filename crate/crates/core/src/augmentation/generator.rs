use crate::autograd::{Graph, Var};
use crate::encoder_decoder::gumbel_softmax;
use crate::error::{Error, Result};
use crate::graph_data::GraphSpec;
use crate::nn::Linear;
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Column of each augmentation choice in the per-node choice rows.
pub const CHOICE_EDGE_MASK: usize = 0;
pub const CHOICE_ATTR_MASK: usize = 1;
pub const CHOICE_UNCHANGED: usize = 2;

/// Two mean-aggregation message-passing layers followed by a 3-way choice head.
#[derive(Clone, Debug)]
pub struct ViewGenerator {
    pub layer1: Linear,
    pub layer2: Linear,
    pub head: Linear,
    pub p: usize,
    pub d_in: usize,
}

impl ViewGenerator {
    pub fn new(store: &mut ParamStore, name: &str, p: usize, d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let f = p * d_in;
        Self {
            layer1: Linear::new(store, &format!("{name}.sage1"), 2 * f, hidden, rng),
            layer2: Linear::new(store, &format!("{name}.sage2"), 2 * hidden, hidden, rng),
            head: Linear::new(store, &format!("{name}.head"), hidden, 3, rng),
            p,
            d_in,
        }
    }

    /// Zero the head weights and bias it so that every node keeps its data.
    pub fn pin_unchanged(&self, store: &mut ParamStore) {
        let w = store.get_mut(self.head.w);
        w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let b = self.head.b.expect("head has a bias");
        let mut bias = [-1e3; 3];
        bias[CHOICE_UNCHANGED] = 1e3;
        store.get_mut(b).data_mut().copy_from_slice(&bias);
    }

    /// Per-node choice logits `N × 3` from the batch-mean history.
    pub fn logits(&self, g: &mut Graph, p: &Bound, history: &Tensor, graph: &GraphSpec) -> Result<Var> {
        let s = history.shape();
        if s.len() != 4 || s[1] != self.p || s[2] != graph.n_nodes || s[3] != self.d_in {
            return Err(Error::Shape(format!(
                "generator expects [B, {}, {}, {}], got {s:?}",
                self.p, graph.n_nodes, self.d_in
            )));
        }
        let (b, n) = (s[0], s[2]);
        let f = self.p * self.d_in;
        let features = Tensor::from_fn(&[n, f], |ix| {
            let (t, c) = (ix[1] / self.d_in, ix[1] % self.d_in);
            (0..b).map(|bi| history.at(&[bi, t, ix[0], c])).sum::<f64>() / b as f64
        });
        let agg = g.constant(mean_aggregator(graph));
        let mut h = g.constant(features);
        for layer in [&self.layer1, &self.layer2] {
            let neigh = g.matmul(agg, h);
            let cat = g.concat(&[h, neigh], 1);
            let z = layer.forward(g, p, cat);
            h = g.tanh(z);
        }
        Ok(self.head.forward(g, p, h))
    }
}

/// Row `i` averages the neighbours of `i` (self excluded); isolated nodes get a zero row.
pub fn mean_aggregator(graph: &GraphSpec) -> Tensor {
    let n = graph.n_nodes;
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let nb = graph.neighbors(i);
        for &j in &nb {
            m.set(&[i, j], 1.0 / nb.len() as f64);
        }
    }
    m
}

/// Strong view, its adjacency and the per-node choices.
#[derive(Clone, Copy, Debug)]
pub struct GeneratedView {
    pub view: Var,
    pub adjacency: Var,
    pub choices: Var,
}

/// Sample per-node choices and apply them: attribute masking zeroes the
/// node's features, edge masking zeroes its incident off-diagonal edges.
/// `hard = false` keeps the soft relaxation in the forward pass as well.
#[allow(clippy::too_many_arguments)]
pub fn view_generator_forward(
    g: &mut Graph,
    p: &Bound,
    generator: &ViewGenerator,
    history: Var,
    graph: &GraphSpec,
    temperature: f64,
    hard: bool,
    seed: u64,
) -> Result<GeneratedView> {
    let hist_value = g.value(history).clone();
    let logits = generator.logits(g, p, &hist_value, graph)?;
    if !g.value(logits).is_finite() {
        return Err(Error::Numerical(format!("view generator produced non-finite logits (batch seed {seed})")));
    }
    let choices = gumbel_softmax(g, logits, temperature, hard, seed)?;
    let view = apply_choices(g, history, choices, CHOICE_ATTR_MASK);
    let adjacency = masked_adjacency(g, &graph.a_con, choices);
    Ok(GeneratedView {
        view,
        adjacency,
        choices,
    })
}

fn keep_column(g: &mut Graph, choices: Var, col: usize) -> Var {
    let c = g.narrow(choices, 1, col, 1);
    let neg = g.neg(c);
    g.add_scalar(neg, 1.0)
}

/// Scale node `i`'s features by `1 − choices[i, col]`.
pub fn apply_choices(g: &mut Graph, x: Var, choices: Var, col: usize) -> Var {
    let keep = keep_column(g, choices, col);
    g.mul(x, keep)
}

/// `a[i, j] · keep_i · keep_j` off the diagonal, with the diagonal kept.
pub fn masked_adjacency(g: &mut Graph, a_con: &Tensor, choices: Var) -> Var {
    let n = a_con.dim(0);
    let keep = keep_column(g, choices, CHOICE_EDGE_MASK);
    let keep_t = g.reshape(keep, &[1, n]);
    let outer = g.mul(keep, keep_t);
    let off = g.constant(Tensor::from_fn(&[n, n], |ix| if ix[0] == ix[1] { 0.0 } else { 1.0 }));
    let outer = g.mul(outer, off);
    let eye = g.constant(Tensor::eye(n));
    let gate = g.add(outer, eye);
    let a = g.constant(a_con.clone());
    g.mul(a, gate)
}
