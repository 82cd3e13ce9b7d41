//! Negative-sample filtering by geography and semantic similarity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph_data::{CalendarDay, GraphSpec};
use crate::tensor::Tensor;

/// `1 − JS(m_i ‖ m_j)` with base-2 logarithms, so the score lies in `[0, 1]`.
pub fn js_similarity(m_i: &[f64], m_j: &[f64]) -> Result<f64> {
    if m_i.len() != m_j.len() {
        return Err(Error::Shape(format!(
            "semantic vectors differ in length: {} vs {}",
            m_i.len(),
            m_j.len()
        )));
    }
    for m in [m_i, m_j] {
        let s: f64 = m.iter().sum();
        if m.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("not a probability vector (sum {s})")));
        }
    }
    let kl_half = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (2.0 * x / (x + y)).log2())
            .sum::<f64>()
    };
    let js = 0.5 * kl_half(m_i, m_j) + 0.5 * kl_half(m_j, m_i);
    Ok((1.0 - js).clamp(0.0, 1.0))
}

/// Which matrix defines geographic neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NeighborSource {
    Connectivity,
    /// Nodes within `radius` in the road-distance matrix.
    Distance { radius: f64 },
}

/// Per-node sets of admissible negatives, indexed by batch position.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeFilter {
    pub allowed: Vec<Vec<usize>>,
    pub u: usize,
    pub spatial_excluded: Vec<Vec<usize>>,
    pub semantic_excluded: Vec<Vec<usize>>,
    /// Nodes whose set came out empty and were reset to "everyone but self".
    pub fallback: Vec<usize>,
}

impl NegativeFilter {
    /// Every other node is a negative.
    pub fn unfiltered(n: usize) -> Self {
        Self {
            allowed: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
            u: 0,
            spatial_excluded: vec![Vec::new(); n],
            semantic_excluded: vec![Vec::new(); n],
            fallback: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    /// Additive logit mask: 0 for the positive and allowed negatives, a large
    /// negative number elsewhere.
    pub fn logit_mask(&self) -> Tensor {
        let n = self.len();
        let mut m = Tensor::full(&[n, n], -1e30);
        for (i, set) in self.allowed.iter().enumerate() {
            m.set(&[i, i], 0.0);
            for &j in set {
                m.set(&[i, j], 0.0);
            }
        }
        m
    }
}

fn spatial_neighbors(graph: &GraphSpec, a: usize, b: usize, source: NeighborSource) -> Result<bool> {
    match source {
        NeighborSource::Connectivity => Ok(graph.a_con.at(&[a, b]) != 0.0),
        NeighborSource::Distance { radius } => {
            let d = graph
                .a_dist
                .as_ref()
                .ok_or_else(|| Error::Config("distance filtering needs a distance matrix".into()))?;
            Ok(d.at(&[a, b]) <= radius)
        }
    }
}

/// Filter from the graph's own semantic vectors and connectivity.
pub fn build_negative_filter(graph: &GraphSpec, batch_nodes: &[usize], u: usize) -> Result<NegativeFilter> {
    build_negative_filter_with(graph, &graph.semantic, batch_nodes, u, NeighborSource::Connectivity)
}

/// For each batch position `i`, exclude `i`, its geographic neighbours and
/// the `u` semantically closest other nodes (ties to the lower index).
pub fn build_negative_filter_with(
    graph: &GraphSpec,
    semantic: &Tensor,
    batch_nodes: &[usize],
    u: usize,
    source: NeighborSource,
) -> Result<NegativeFilter> {
    let n = batch_nodes.len();
    if u >= n {
        return Err(Error::Config(format!("top-u = {u} must be below the batch node count {n}")));
    }
    let mut out = NegativeFilter {
        allowed: Vec::with_capacity(n),
        u,
        spatial_excluded: Vec::with_capacity(n),
        semantic_excluded: Vec::with_capacity(n),
        fallback: Vec::new(),
    };
    for (i, &ni) in batch_nodes.iter().enumerate() {
        let mut sims = Vec::with_capacity(n);
        for (j, &nj) in batch_nodes.iter().enumerate() {
            if j != i {
                sims.push((j, js_similarity(semantic.row(ni), semantic.row(nj))?));
            }
        }
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut semantic_ex: Vec<usize> = sims[..u].iter().map(|s| s.0).collect();
        semantic_ex.sort_unstable();
        let mut spatial_ex = Vec::new();
        for (j, &nj) in batch_nodes.iter().enumerate() {
            if j != i && spatial_neighbors(graph, ni, nj, source)? {
                spatial_ex.push(j);
            }
        }
        let mut allowed: Vec<usize> = (0..n)
            .filter(|&j| j != i && !spatial_ex.contains(&j) && !semantic_ex.contains(&j))
            .collect();
        if allowed.is_empty() && n > 1 {
            log::warn!("negative set of node {ni} is empty; falling back to all other nodes");
            out.fallback.push(i);
            allowed = (0..n).filter(|&j| j != i).collect();
        }
        out.allowed.push(allowed);
        out.spatial_excluded.push(spatial_ex);
        out.semantic_excluded.push(semantic_ex);
    }
    Ok(out)
}

/// Filters keyed by calendar position, built lazily.
#[derive(Clone, Debug)]
pub struct FilterBank {
    u: usize,
    source: NeighborSource,
    enabled: bool,
    cache: HashMap<CalendarDay, NegativeFilter>,
}

impl FilterBank {
    pub fn new(u: usize, source: NeighborSource, enabled: bool) -> Self {
        Self {
            u,
            source,
            enabled,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, graph: &GraphSpec, day: &CalendarDay) -> Result<&NegativeFilter> {
        if !self.cache.contains_key(day) {
            let n = graph.n_nodes;
            let f = if self.enabled {
                let nodes: Vec<usize> = (0..n).collect();
                build_negative_filter_with(graph, &graph.semantic_at(day), &nodes, self.u, self.source)?
            } else {
                NegativeFilter::unfiltered(n)
            };
            self.cache.insert(*day, f);
        }
        Ok(&self.cache[day])
    }
}
