use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Linear};
use crate::params::{init_normal, Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::attention::{AttentionKind, MultiHeadAttention};
use super::encoder::{EncoderConfig, EncoderOutput};

#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm3: LayerNorm,
}

/// One-shot decoder: `K` learned horizon slots attend causally to each other
/// and to the encoder sequence of their node.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub queries: ParamId,
    pub blocks: Vec<DecoderBlock>,
    pub out: Linear,
    pub k: usize,
    pub d_model: usize,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let queries = store.add(
            format!("{name}.queries"),
            init_normal(rng, &[cfg.k, d], 1.0 / (d as f64).sqrt()),
        );
        let blocks = (0..cfg.n_decoder_blocks)
            .map(|b| {
                let n = format!("{name}.block{b}");
                DecoderBlock {
                    self_attn: MultiHeadAttention::new(store, &format!("{n}.self"), d, cfg.n_heads, rng),
                    norm1: LayerNorm::new(store, &format!("{n}.norm1"), d),
                    cross_attn: MultiHeadAttention::new(store, &format!("{n}.cross"), d, cfg.n_heads, rng),
                    norm2: LayerNorm::new(store, &format!("{n}.norm2"), d),
                    ff1: Linear::new(store, &format!("{n}.ff1"), d, 2 * d, rng),
                    ff2: Linear::new(store, &format!("{n}.ff2"), 2 * d, d, rng),
                    norm3: LayerNorm::new(store, &format!("{n}.norm3"), d),
                }
            })
            .collect();
        Ok(Self {
            queries,
            blocks,
            out: Linear::new(store, &format!("{name}.out"), d, cfg.d_out, rng),
            k: cfg.k,
            d_model: d,
        })
    }
}

/// `[B, K, N, d_out]` forecasts from an encoder pass.
pub fn decoder_forward(g: &mut Graph, p: &Bound, dec: &Decoder, enc: &EncoderOutput) -> Result<Var> {
    let s = g.shape(enc.z_seq).to_vec();
    let (b, l, n, d) = (s[0], s[1], s[2], s[3]);
    if d != dec.d_model {
        return Err(Error::Shape(format!("decoder width {} but encoder width {d}", dec.d_model)));
    }
    let k = dec.k;
    let memory = g.permute(enc.z_seq, &[0, 2, 1, 3]);
    let memory = g.reshape(memory, &[b * n, l, d]);
    let zeros = g.constant(Tensor::zeros(&[b * n, k, d]));
    let mut x = g.add(zeros, p.var(dec.queries));
    for block in &dec.blocks {
        let y = block.self_attn.forward(g, p, x, x, AttentionKind::Dense { causal: true });
        let r = g.add(x, y);
        x = block.norm1.forward(g, p, r);
        let y = block.cross_attn.forward(g, p, x, memory, AttentionKind::Dense { causal: false });
        let r = g.add(x, y);
        x = block.norm2.forward(g, p, r);
        let h = block.ff1.forward(g, p, x);
        let h = g.tanh(h);
        let y = block.ff2.forward(g, p, h);
        let r = g.add(x, y);
        x = block.norm3.forward(g, p, r);
    }
    let y = dec.out.forward(g, p, x);
    let d_out = dec.out.d_out;
    let y = g.reshape(y, &[b, n, k, d_out]);
    Ok(g.permute(y, &[0, 2, 1, 3]))
}
