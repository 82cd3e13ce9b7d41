//! Spatial-temporal encoder stack, forecast decoder and shared sampling primitive.

mod attention;
mod decoder;
mod dyngraph;
mod encoder;
mod gumbel;
mod posenc;

pub use attention::{
    active_queries, causal_mask, dense_attention, probsparse_attention, probsparse_with_u, AttentionKind,
    MultiHeadAttention, DENSE_FALLBACK_LEN,
};
pub use decoder::{decoder_forward, Decoder, DecoderBlock};
pub use dyngraph::{di_gcn, renormalize_rows, DynamicAdjacency, DynamicGraphGenerator};
pub use encoder::{sts_cm_forward, EncodeOptions, Encoder, EncoderBlock, EncoderConfig, EncoderOutput};
pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_tensor, one_hot_argmax, tempered_softmax};
pub use posenc::{coordinate_features, geometric_scales, temporal_pe, temporal_pe_at, SpatialEmbedding};
