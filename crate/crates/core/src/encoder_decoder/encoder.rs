use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::graph_data::GraphSpec;
use crate::nn::{row_normalize, LayerNorm, Linear};
use crate::params::{Bound, ParamStore};
use crate::rng::{self, Rng};

use super::attention::{AttentionKind, MultiHeadAttention};
use super::dyngraph::{di_gcn, DynamicGraphGenerator};
use super::posenc::{temporal_pe_at, SpatialEmbedding};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub d_in: usize,
    pub d_out: usize,
    /// History length.
    pub p: usize,
    /// Forecast horizon.
    pub k: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub n_decoder_blocks: usize,
    pub probsparse_factor: f64,
    /// Temperature of the dynamic adjacency resampling.
    pub omega: f64,
    pub diffusion_steps: usize,
    pub graph_hidden: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub pe_scales: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_in: 1,
            d_out: 1,
            p: 12,
            k: 3,
            d_model: 16,
            n_heads: 2,
            n_blocks: 4,
            n_decoder_blocks: 4,
            probsparse_factor: 5.0,
            omega: 0.5,
            diffusion_steps: 2,
            graph_hidden: 16,
            gamma_min: 1.0,
            gamma_max: 20.0,
            pe_scales: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_in", self.d_in),
            ("d_out", self.d_out),
            ("p", self.p),
            ("k", self.k),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_blocks", self.n_blocks),
            ("n_decoder_blocks", self.n_decoder_blocks),
            ("graph_hidden", self.graph_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::Config(format!("d_model must be even, got {}", self.d_model)));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.probsparse_factor > 0.0) {
            return Err(Error::Config("probsparse factor must be positive".into()));
        }
        super::posenc::geometric_scales(self.gamma_min, self.gamma_max, self.pe_scales)?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub graph: DynamicGraphGenerator,
    pub gcn: Linear,
    pub norm2: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub input: Linear,
    pub spatial: SpatialEmbedding,
    pub blocks: Vec<EncoderBlock>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let blocks = (0..cfg.n_blocks)
            .map(|b| {
                let n = format!("{name}.block{b}");
                EncoderBlock {
                    attn: MultiHeadAttention::new(store, &format!("{n}.attn"), d, cfg.n_heads, rng),
                    norm1: LayerNorm::new(store, &format!("{n}.norm1"), d),
                    graph: DynamicGraphGenerator::new(
                        store,
                        &format!("{n}.graph"),
                        d,
                        cfg.diffusion_steps,
                        cfg.graph_hidden,
                        rng,
                    ),
                    gcn: Linear::no_bias(store, &format!("{n}.gcn"), d, d, rng),
                    norm2: LayerNorm::new(store, &format!("{n}.norm2"), d),
                }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            input: Linear::new(store, &format!("{name}.input"), cfg.d_in, d, rng),
            spatial: SpatialEmbedding::new(
                store,
                &format!("{name}.spatial"),
                cfg.gamma_min,
                cfg.gamma_max,
                cfg.pe_scales,
                d,
                rng,
            )?,
            blocks,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeOptions {
    pub seed: u64,
    /// Gumbel-perturb the dynamic adjacency.
    pub stochastic: bool,
    /// Position of the first window step relative to the history start.
    pub time_offset: usize,
    /// Use the row-normalized connectivity in place of the learned adjacency.
    pub static_graph: bool,
}

impl EncodeOptions {
    /// Deterministic pass over a history window.
    pub fn eval() -> Self {
        Self {
            seed: 0,
            stochastic: false,
            time_offset: 0,
            static_graph: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    /// `B × L × N × d_model`.
    pub z_seq: Var,
    /// `B × N × d_model`, the last time position.
    pub c_vec: Var,
    /// `N × N` adjacency of the last block.
    pub a_dyn: Var,
    /// `adjacency ⊙ a_dyn` of the last block, before renormalization.
    pub a_fused: Var,
}

/// Run the encoder stack on `view: [B, L, N, d_in]` with the view's adjacency.
pub fn sts_cm_forward(
    g: &mut Graph,
    p: &Bound,
    enc: &Encoder,
    view: Var,
    adjacency: Var,
    graph: &GraphSpec,
    opts: &EncodeOptions,
) -> Result<EncoderOutput> {
    let cfg = &enc.cfg;
    let s = g.shape(view).to_vec();
    if s.len() != 4 || s[2] != graph.n_nodes || s[3] != cfg.d_in {
        return Err(Error::Shape(format!(
            "encoder expects [B, L, {}, {}], got {s:?}",
            graph.n_nodes, cfg.d_in
        )));
    }
    if g.shape(adjacency) != [graph.n_nodes, graph.n_nodes] {
        return Err(Error::Shape(format!("adjacency is {:?}", g.shape(adjacency))));
    }
    let (b, l, n, d) = (s[0], s[1], s[2], cfg.d_model);

    let x = enc.input.forward(g, p, view);
    let tpe = temporal_pe_at(opts.time_offset, l, cfg.p, d)?.reshape(&[l, 1, d])?;
    let tpe = g.constant(tpe);
    let x = g.add(x, tpe);
    let spe = enc.spatial.forward(g, p, graph);
    let mut x = g.add(x, spe);

    let static_adj = opts
        .static_graph
        .then(|| row_normalize(&graph.a_con));
    let mut last = None;
    for (bi, block) in enc.blocks.iter().enumerate() {
        let bi = bi as u64;
        let seq = g.permute(x, &[0, 2, 1, 3]);
        let seq = g.reshape(seq, &[b * n, l, d]);
        let kind = AttentionKind::ProbSparse {
            factor: cfg.probsparse_factor,
            seed: rng::derive(opts.seed, &[2 * bi]),
        };
        let y = block.attn.forward(g, p, seq, seq, kind);
        let y = g.reshape(y, &[b, n, l, d]);
        let y = g.permute(y, &[0, 2, 1, 3]);
        let r = g.add(x, y);
        x = block.norm1.forward(g, p, r);

        let a_dyn = match &static_adj {
            Some(a) => g.constant(a.clone()),
            None => {
                let noise = opts.stochastic.then(|| rng::derive(opts.seed, &[2 * bi + 1]));
                block.graph.forward(g, p, x, adjacency, cfg.omega, noise)?.a_dyn
            }
        };
        let (y, fused) = di_gcn(g, p, x, adjacency, a_dyn, &block.gcn);
        let r = g.add(x, y);
        x = block.norm2.forward(g, p, r);
        last = Some((a_dyn, fused));
    }
    if !g.value(x).is_finite() {
        return Err(Error::Numerical("encoder produced non-finite representations".into()));
    }
    let (a_dyn, a_fused) = last.expect("at least one block");
    let c = g.narrow(x, 1, l - 1, 1);
    let c_vec = g.reshape(c, &[b, n, d]);
    Ok(EncoderOutput {
        z_seq: x,
        c_vec,
        a_dyn,
        a_fused,
    })
}
