//! Flat `section.key = value` configuration files.
//!
//! Blank lines and text after `#` are ignored. Every key has a default, so an
//! empty file is a valid configuration. [`ExperimentConfig::to_text`] writes
//! every key in a fixed order; that text is what checkpoints store and hash.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::contrastive::NeighborSource;
use crate::error::{Error, Result};
use crate::graph_data::SynthOptions;
use crate::training::{ModelConfig, TrainConfig};

/// Where the series and graph come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    Files { series: PathBuf, graph: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub synth: SynthOptions,
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            synth: SynthOptions::default(),
            split: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Independent training runs per configuration.
    pub seeds: usize,
    /// MAPE skips targets whose magnitude is at most this many training
    /// standard deviations.
    pub mape_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            mape_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Model settings; `p`, `k`, `d_in` and `d_out` of the encoder and the
    /// negative filter are filled in by [`ExperimentConfig::model_config`].
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    /// Use the distance matrix instead of connectivity for negative filtering.
    pub filter_by_distance: bool,
    pub filter_radius: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            filter_by_distance: false,
            filter_radius: 5.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

/// Shorthands accepted wherever a key is expected, e.g. by sweeps.
pub fn resolve_alias(key: &str) -> &str {
    match key {
        "epsilon" => "train.epsilon",
        "top_u" => "cl.top_u",
        "mask_rate" => "aug.mask_rate",
        "edge_mask_rate" => "aug.edge_mask_rate",
        "attr_mask_rate" => "aug.attr_mask_rate",
        "lr" => "train.lr",
        other => other,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Assign one key; `value` is the right-hand side of a config line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.model.encoder;
        let a = &mut self.model.aug;
        let c = &mut self.model.cl;
        let t = &mut self.train;
        let d = &mut self.data;
        match resolve_alias(key) {
            "aug.edge_mask_rate" => a.edge_mask_rate = parse(key, value)?,
            "aug.attr_mask_rate" => a.attr_mask_rate = parse(key, value)?,
            "aug.mask_rate" => {
                a.edge_mask_rate = parse(key, value)?;
                a.attr_mask_rate = a.edge_mask_rate;
            }
            "aug.temporal_fusion" => a.temporal_fusion = parse(key, value)?,
            "aug.delta_ts" => a.delta_ts = parse(key, value)?,
            "aug.generator_temperature" => a.generator_temperature = parse(key, value)?,
            "aug.generator_hidden_dim" => a.generator_hidden_dim = parse(key, value)?,
            "model.d_model" => e.d_model = parse(key, value)?,
            "model.n_heads" => e.n_heads = parse(key, value)?,
            "model.n_blocks" => e.n_blocks = parse(key, value)?,
            "model.n_decoder_blocks" => e.n_decoder_blocks = parse(key, value)?,
            "model.probsparse_factor" => e.probsparse_factor = parse(key, value)?,
            "model.omega" => e.omega = parse(key, value)?,
            "model.diffusion_steps" => e.diffusion_steps = parse(key, value)?,
            "model.graph_hidden" => e.graph_hidden = parse(key, value)?,
            "model.gamma_min" => e.gamma_min = parse(key, value)?,
            "model.gamma_max" => e.gamma_max = parse(key, value)?,
            "model.pe_scales" => e.pe_scales = parse(key, value)?,
            "cl.delta" => c.delta = parse(key, value)?,
            "cl.top_u" => c.top_u = parse(key, value)?,
            "cl.d_proj" => c.d_proj = parse(key, value)?,
            "cl.filter_matrix" => {
                self.filter_by_distance = match value {
                    "con" => false,
                    "dist" => true,
                    _ => return Err(Error::Config(format!("{key}: expected 'con' or 'dist', got '{value}'"))),
                }
            }
            "cl.filter_radius" => self.filter_radius = parse(key, value)?,
            "train.epsilon" => t.epsilon = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.lr" => t.learning_rate = parse(key, value)?,
            "train.weight_decay" => t.weight_decay = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.patience" => t.patience = parse(key, value)?,
            "train.variant" => t.variant = value.parse()?,
            "train.p" => t.p = parse(key, value)?,
            "train.k" => t.k = parse(key, value)?,
            "train.checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "train.clip_norm" => t.clip_norm = parse(key, value)?,
            "data.source" => {
                d.source = match value {
                    "synthetic" => DataSource::Synthetic,
                    "files" => match &d.source {
                        DataSource::Files { .. } => d.source.clone(),
                        DataSource::Synthetic => DataSource::Files {
                            series: PathBuf::new(),
                            graph: PathBuf::new(),
                        },
                    },
                    _ => return Err(Error::Config(format!("{key}: expected 'synthetic' or 'files', got '{value}'"))),
                }
            }
            k @ ("data.series" | "data.graph") => {
                let (mut series, mut graph) = match &d.source {
                    DataSource::Files { series, graph } => (series.clone(), graph.clone()),
                    DataSource::Synthetic => (PathBuf::new(), PathBuf::new()),
                };
                if k == "data.series" {
                    series = value.into();
                } else {
                    graph = value.into();
                }
                d.source = DataSource::Files { series, graph };
            }
            "data.nodes" => d.synth.n_nodes = parse(key, value)?,
            "data.days" => d.synth.days = parse(key, value)?,
            "data.interval" => d.synth.interval_minutes = parse(key, value)?,
            "data.seed" => d.synth.seed = parse(key, value)?,
            "data.noise_std" => d.synth.noise_std = parse(key, value)?,
            "data.weekly_amplitude" => d.synth.weekly_amplitude = parse(key, value)?,
            "data.first_day_holiday" => d.synth.first_day_holiday = parse(key, value)?,
            "data.split" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
                d.split = parts
                    .try_into()
                    .map_err(|_| Error::Config(format!("{key}: expected three comma-separated fractions")))?;
            }
            "eval.seeds" => self.eval.seeds = parse(key, value)?,
            "eval.mape_floor" => self.eval.mape_floor = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.model.encoder;
        let a = &self.model.aug;
        let c = &self.model.cl;
        let t = &self.train;
        let d = &self.data;
        let (source, series, graph) = match &d.source {
            DataSource::Synthetic => ("synthetic", None, None),
            DataSource::Files { series, graph } => ("files", Some(series), Some(graph)),
        };
        let mut out = vec![
            ("data.source", source.to_string()),
            ("data.nodes", d.synth.n_nodes.to_string()),
            ("data.days", d.synth.days.to_string()),
            ("data.interval", d.synth.interval_minutes.to_string()),
            ("data.seed", d.synth.seed.to_string()),
            ("data.noise_std", d.synth.noise_std.to_string()),
            ("data.weekly_amplitude", d.synth.weekly_amplitude.to_string()),
            ("data.first_day_holiday", d.synth.first_day_holiday.to_string()),
            ("data.split", format!("{}, {}, {}", d.split[0], d.split[1], d.split[2])),
        ];
        if let (Some(s), Some(g)) = (series, graph) {
            out.push(("data.series", s.display().to_string()));
            out.push(("data.graph", g.display().to_string()));
        }
        out.extend([
            ("aug.edge_mask_rate", a.edge_mask_rate.to_string()),
            ("aug.attr_mask_rate", a.attr_mask_rate.to_string()),
            ("aug.temporal_fusion", a.temporal_fusion.to_string()),
            ("aug.delta_ts", a.delta_ts.to_string()),
            ("aug.generator_temperature", a.generator_temperature.to_string()),
            ("aug.generator_hidden_dim", a.generator_hidden_dim.to_string()),
            ("model.d_model", e.d_model.to_string()),
            ("model.n_heads", e.n_heads.to_string()),
            ("model.n_blocks", e.n_blocks.to_string()),
            ("model.n_decoder_blocks", e.n_decoder_blocks.to_string()),
            ("model.probsparse_factor", e.probsparse_factor.to_string()),
            ("model.omega", e.omega.to_string()),
            ("model.diffusion_steps", e.diffusion_steps.to_string()),
            ("model.graph_hidden", e.graph_hidden.to_string()),
            ("model.gamma_min", e.gamma_min.to_string()),
            ("model.gamma_max", e.gamma_max.to_string()),
            ("model.pe_scales", e.pe_scales.to_string()),
            ("cl.delta", c.delta.to_string()),
            ("cl.top_u", c.top_u.to_string()),
            ("cl.d_proj", c.d_proj.to_string()),
            ("cl.filter_matrix", if self.filter_by_distance { "dist" } else { "con" }.to_string()),
            ("cl.filter_radius", self.filter_radius.to_string()),
            ("train.epsilon", t.epsilon.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.lr", t.learning_rate.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.variant", t.variant.to_string()),
            ("train.p", t.p.to_string()),
            ("train.k", t.k.to_string()),
            ("train.checkpoint_every", t.checkpoint_every.to_string()),
            ("train.clip_norm", t.clip_norm.to_string()),
            ("eval.seeds", self.eval.seeds.to_string()),
            ("eval.mape_floor", self.eval.mape_floor.to_string()),
        ]);
        out
    }

    /// Canonical text: every key, one per line.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Model settings for a series with `d_in` channels.
    pub fn model_config(&self, d_in: usize) -> ModelConfig {
        let mut m = self.model.clone();
        m.encoder.p = self.train.p;
        m.encoder.k = self.train.k;
        m.encoder.d_in = d_in;
        m.encoder.d_out = d_in;
        m.cl.filter = if self.filter_by_distance {
            NeighborSource::Distance {
                radius: self.filter_radius,
            }
        } else {
            NeighborSource::Connectivity
        };
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(1).validate()?;
        self.train.validate()?;
        if self.eval.seeds == 0 {
            return Err(Error::Config("eval.seeds must be at least 1".into()));
        }
        if !(self.eval.mape_floor >= 0.0) {
            return Err(Error::Config("eval.mape_floor must be nonnegative".into()));
        }
        if let DataSource::Files { series, graph } = &self.data.source {
            if series.as_os_str().is_empty() || graph.as_os_str().is_empty() {
                return Err(Error::Config("data.source = files needs data.series and data.graph".into()));
            }
        }
        Ok(())
    }
}
