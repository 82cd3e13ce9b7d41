use std::fmt;
use std::str::FromStr;

use crate::augmentation::AugmentationConfig;
use crate::contrastive::NeighborSource;
use crate::encoder_decoder::EncoderConfig;
use crate::error::{Error, Result};

/// Pipeline wiring: the full model or one component switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    /// No contrastive losses.
    StsCmOnly,
    /// Mutual-view prediction losses only, no semantic contrast.
    StsCmMvp,
    /// Every other node is a negative.
    NoNegFilter,
    /// Static propagation over the row-normalized connectivity.
    NoDiGcn,
    /// Basic augmentation for both views.
    BaOnly,
    /// Learned augmentation for both views.
    SaOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::StsCmOnly,
        Variant::StsCmMvp,
        Variant::NoNegFilter,
        Variant::NoDiGcn,
        Variant::BaOnly,
        Variant::SaOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::StsCmOnly => "sts_cm_only",
            Variant::StsCmMvp => "sts_cm_mvp",
            Variant::NoNegFilter => "no_neg_filter",
            Variant::NoDiGcn => "no_di_gcn",
            Variant::BaOnly => "ba_only",
            Variant::SaOnly => "sa_only",
        }
    }

    pub fn uses_contrast(self) -> bool {
        self != Variant::StsCmOnly
    }

    pub fn uses_semantic_loss(self) -> bool {
        self.uses_contrast() && self != Variant::StsCmMvp
    }

    pub fn filters_negatives(self) -> bool {
        self != Variant::NoNegFilter
    }

    pub fn static_graph(self) -> bool {
        self == Variant::NoDiGcn
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveConfig {
    /// Cosine temperature of the semantic loss.
    pub delta: f64,
    pub top_u: usize,
    pub d_proj: usize,
    pub filter: NeighborSource,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            top_u: 2,
            d_proj: 16,
            filter: NeighborSource::Connectivity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub aug: AugmentationConfig,
    pub cl: ContrastiveConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.aug.validate()?;
        if !(self.cl.delta > 0.0) {
            return Err(Error::Config(format!("cl.delta must be positive, got {}", self.cl.delta)));
        }
        if self.cl.d_proj == 0 {
            return Err(Error::Config("cl.d_proj must be positive".into()));
        }
        if let NeighborSource::Distance { radius } = self.cl.filter {
            if !(radius >= 0.0) {
                return Err(Error::Config(format!("filter radius must be nonnegative, got {radius}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the contrastive losses in the joint objective.
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub p: usize,
    pub k: usize,
    pub patience: usize,
    /// Write a checkpoint every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
    pub variant: Variant,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            batch_size: 64,
            epochs: 100,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            seed: 0,
            p: 12,
            k: 3,
            patience: 10,
            checkpoint_every: 0,
            variant: Variant::Full,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if self.batch_size == 0 || self.p == 0 || self.k == 0 {
            return Err(Error::Config("batch size, p and k must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay nonnegative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}
