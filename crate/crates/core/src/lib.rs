//! Contrastive spatiotemporal traffic forecasting.
//!
//! Data handling lives in [`graph_data`], view construction in
//! [`augmentation`], the encoder and decoder in [`encoder_decoder`], the
//! contrastive objectives in [`contrastive`], optimization in [`training`]
//! and the experiment drivers in [`experiments`]. Everything is built on the
//! small reverse-mode tape in [`autograd`] over f64 [`Tensor`]s.

pub mod augmentation;
pub mod autograd;
pub mod container;
pub mod contrastive;
pub mod encoder_decoder;
pub mod error;
pub mod experiments;
pub mod graph_data;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
