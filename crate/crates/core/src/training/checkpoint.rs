use std::path::Path;

use sha2::{Digest, Sha256};

use crate::container::ArrayFile;
use crate::error::{Error, Result};
use crate::graph_data::Normalizer;
use crate::tensor::Tensor;

use super::step::TrainState;

pub const CHECKPOINT_VERSION: &str = "1";

/// Everything needed to resume training or reproduce a forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor)>,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    pub adam_step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub seed: u64,
    pub normalizer: Normalizer,
    pub config_text: String,
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn capture(state: &TrainState, seed: u64, normalizer: Normalizer, config_text: &str) -> Self {
        let o = &state.optimizer;
        Self {
            params: state.model.store.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
            adam_m: o.m.clone(),
            adam_v: o.v.clone(),
            adam_step: o.step,
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
            step: state.step,
            seed,
            normalizer,
            config_text: config_text.to_string(),
        }
    }

    /// Copy parameters and optimizer moments into a state built from the same
    /// configuration.
    pub fn restore(&self, state: &mut TrainState) -> Result<()> {
        let store = &mut state.model.store;
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, t) in &self.params {
            let id = store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("model has no parameter '{name}'")))?;
            if store.get(id).shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' is {:?} in the checkpoint but {:?} in the model",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
        }
        let mut m = vec![Tensor::zeros(&[0]); store.len()];
        let mut v = m.clone();
        for (i, (name, t)) in self.params.iter().enumerate() {
            let id = store.find(name).expect("checked above");
            *store.get_mut(id) = t.clone();
            m[id.index()] = self.adam_m[i].clone();
            v[id.index()] = self.adam_v[i].clone();
        }
        let o = &mut state.optimizer;
        o.m = m;
        o.v = v;
        o.step = self.adam_step;
        o.lr = self.lr;
        o.beta1 = self.beta1;
        o.beta2 = self.beta2;
        o.eps = self.eps;
        o.weight_decay = self.weight_decay;
        state.step = self.step;
        Ok(())
    }

    pub fn to_file(&self) -> ArrayFile {
        let mut f = ArrayFile::new();
        f.insert_text("version", CHECKPOINT_VERSION);
        for (i, (name, t)) in self.params.iter().enumerate() {
            f.insert_array(format!("param/{name}"), t.clone());
            f.insert_array(format!("adam/m/{name}"), self.adam_m[i].clone());
            f.insert_array(format!("adam/v/{name}"), self.adam_v[i].clone());
        }
        let names: Vec<&str> = self.params.iter().map(|(n, _)| n.as_str()).collect();
        f.insert_text("param_order", names.join("\n"));
        f.insert_text("adam/step", self.adam_step.to_string());
        for (k, x) in [
            ("adam/lr", self.lr),
            ("adam/beta1", self.beta1),
            ("adam/beta2", self.beta2),
            ("adam/eps", self.eps),
            ("adam/weight_decay", self.weight_decay),
            ("normalizer/mean", self.normalizer.mean),
            ("normalizer/std", self.normalizer.std),
        ] {
            f.insert_scalar(k, x);
        }
        f.insert_text("step", self.step.to_string());
        f.insert_text("seed", self.seed.to_string());
        f.insert_text("config", self.config_text.clone());
        f.insert_text("config_sha256", config_hash(&self.config_text));
        f
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = ArrayFile::read(path)?;
        let text = |name: &str| {
            f.text(name)
                .ok_or_else(|| Error::Checkpoint(format!("{}: missing entry '{name}'", path.display())))
        };
        let int = |name: &str| -> Result<u64> {
            text(name)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("{}: entry '{name}' is not an integer", path.display())))
        };
        let version = text("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let config_text = text("config")?.to_string();
        if text("config_sha256")? != config_hash(&config_text) {
            return Err(Error::Checkpoint(format!("{}: configuration hash mismatch", path.display())));
        }
        let order = text("param_order")?;
        let mut params = Vec::new();
        let mut adam_m = Vec::new();
        let mut adam_v = Vec::new();
        for name in order.lines().filter(|l| !l.is_empty()) {
            params.push((name.to_string(), f.require_array(&format!("param/{name}"), path)?.clone()));
            adam_m.push(f.require_array(&format!("adam/m/{name}"), path)?.clone());
            adam_v.push(f.require_array(&format!("adam/v/{name}"), path)?.clone());
        }
        Ok(Self {
            params,
            adam_m,
            adam_v,
            adam_step: int("adam/step")?,
            lr: f.require_scalar("adam/lr", path)?,
            beta1: f.require_scalar("adam/beta1", path)?,
            beta2: f.require_scalar("adam/beta2", path)?,
            eps: f.require_scalar("adam/eps", path)?,
            weight_decay: f.require_scalar("adam/weight_decay", path)?,
            step: int("step")?,
            seed: int("seed")?,
            normalizer: Normalizer {
                mean: f.require_scalar("normalizer/mean", path)?,
                std: f.require_scalar("normalizer/std", path)?,
            },
            config_text,
        })
    }
}
