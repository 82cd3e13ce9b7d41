//! Basic and strong augmentation views of a window batch.

mod fusion;
mod generator;
mod masking;

pub use fusion::{fuse, fuse_var, temporal_scale_fusion, FusionWeights};
pub use generator::{
    apply_choices, masked_adjacency, mean_aggregator, view_generator_forward, GeneratedView, ViewGenerator,
    CHOICE_ATTR_MASK, CHOICE_EDGE_MASK, CHOICE_UNCHANGED,
};
pub use masking::{attr_mask, attr_mask_positions, edge_mask};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::graph_data::{GraphSpec, WindowBatch};
use crate::params::{Bound, ParamStore};
use crate::rng::{self, stream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationConfig {
    pub edge_mask_rate: f64,
    pub attr_mask_rate: f64,
    /// Blend in the day and week lags; off makes fusion the identity.
    pub temporal_fusion: bool,
    /// Lower bound of the `U(δ, 1)` draw for the fusion weights.
    pub delta_ts: f64,
    pub generator_temperature: f64,
    pub generator_hidden_dim: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            edge_mask_rate: 0.1,
            attr_mask_rate: 0.1,
            temporal_fusion: true,
            delta_ts: 0.5,
            generator_temperature: 0.5,
            generator_hidden_dim: 16,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        masking::check_rate("edge mask rate", self.edge_mask_rate)?;
        masking::check_rate("attribute mask rate", self.attr_mask_rate)?;
        if !(self.delta_ts > 0.0 && self.delta_ts < 1.0) {
            return Err(Error::Config(format!("delta_ts must lie in (0, 1), got {}", self.delta_ts)));
        }
        if !(self.generator_temperature > 0.0) {
            return Err(Error::Config("generator temperature must be positive".into()));
        }
        if self.generator_hidden_dim == 0 {
            return Err(Error::Config("generator hidden width must be positive".into()));
        }
        Ok(())
    }

    fn fusion_weights(&self, tag: u64) -> Result<FusionWeights> {
        if self.temporal_fusion {
            FusionWeights::sample(self.delta_ts, rng::derive(self.seed, &[tag]))
        } else {
            Ok(FusionWeights::NONE)
        }
    }

    /// Same settings with a fresh seed, e.g. one per training step.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Both views of one batch as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedViews {
    pub basic: Tensor,
    pub strong: Tensor,
    pub basic_adj_mask: Tensor,
    pub strong_adjacency: Tensor,
    /// `N × 3` one-hot rows, columns ordered edge-mask, attribute-mask, unchanged.
    pub strong_edge_choices: Tensor,
    pub basic_weights: FusionWeights,
    pub strong_weights: FusionWeights,
}

/// Edge mask, attribute mask, then temporal fusion. Returns the view, the
/// masked adjacency and the fusion weights.
pub fn basic_augment(
    batch: &WindowBatch,
    graph: &GraphSpec,
    cfg: &AugmentationConfig,
) -> Result<(Tensor, Tensor, FusionWeights)> {
    cfg.validate()?;
    let adjacency = edge_mask(&graph.a_con, cfg.edge_mask_rate, rng::derive(cfg.seed, &[stream::EDGE_MASK]))?;
    let masked = attr_mask(&batch.history, cfg.attr_mask_rate, rng::derive(cfg.seed, &[stream::ATTR_MASK]))?;
    let weights = cfg.fusion_weights(stream::FUSION_BASIC)?;
    Ok((fuse(&masked, batch, weights), adjacency, weights))
}

/// Strong view inside a graph so that gradients reach the generator.
#[derive(Clone, Copy, Debug)]
pub struct StrongView {
    pub view: Var,
    pub adjacency: Var,
    pub choices: Var,
    pub weights: FusionWeights,
}

/// Learned per-node augmentation followed by temporal fusion.
pub fn strong_augment(
    g: &mut Graph,
    p: &Bound,
    generator: &ViewGenerator,
    batch: &WindowBatch,
    graph: &GraphSpec,
    cfg: &AugmentationConfig,
) -> Result<StrongView> {
    cfg.validate()?;
    let history = g.constant(batch.history.clone());
    let gen = view_generator_forward(
        g,
        p,
        generator,
        history,
        graph,
        cfg.generator_temperature,
        true,
        rng::derive(cfg.seed, &[stream::GENERATOR]),
    )?;
    let weights = cfg.fusion_weights(stream::FUSION_STRONG)?;
    let view = fuse_var(g, gen.view, batch, weights);
    Ok(StrongView {
        view,
        adjacency: gen.adjacency,
        choices: gen.choices,
        weights,
    })
}

/// Evaluate both views without recording gradients.
pub fn augment(
    batch: &WindowBatch,
    graph: &GraphSpec,
    store: &ParamStore,
    generator: &ViewGenerator,
    cfg: &AugmentationConfig,
) -> Result<AugmentedViews> {
    let (basic, basic_adj_mask, basic_weights) = basic_augment(batch, graph, cfg)?;
    let mut g = Graph::new();
    let p = Bound::frozen(&mut g, store);
    let s = strong_augment(&mut g, &p, generator, batch, graph, cfg)?;
    Ok(AugmentedViews {
        basic,
        strong: g.value(s.view).clone(),
        basic_adj_mask,
        strong_adjacency: g.value(s.adjacency).clone(),
        strong_edge_choices: g.value(s.choices).clone(),
        basic_weights,
        strong_weights: s.weights,
    })
}
