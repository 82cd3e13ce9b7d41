use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::graph_data::{
    chronological_split, make_windows, make_windows_ordered, GraphSpec, Normalizer, SplitRanges, TrafficSeries,
};
use crate::params::ParamStore;
use crate::rng::{self, stream};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::step::{mse, predict, train_step, LossBundle, Model, TrainState};

/// A series normalized with training-range statistics, plus its graph.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub series: TrafficSeries,
    pub graph: GraphSpec,
    pub splits: SplitRanges,
    pub normalizer: Normalizer,
}

impl PreparedData {
    pub fn from_raw(raw: &TrafficSeries, graph: GraphSpec, fractions: [f64; 3]) -> Result<Self> {
        let splits = chronological_split(raw.len(), fractions)?;
        let normalizer = Normalizer::fit(raw, splits.train.clone());
        Self::with_normalizer(raw, graph, fractions, normalizer)
    }

    /// Like [`PreparedData::from_raw`] with given normalization statistics.
    pub fn with_normalizer(
        raw: &TrafficSeries,
        graph: GraphSpec,
        fractions: [f64; 3],
        normalizer: Normalizer,
    ) -> Result<Self> {
        graph.validate()?;
        if graph.n_nodes != raw.n_nodes() {
            return Err(Error::Shape(format!(
                "graph has {} nodes but the series has {}",
                graph.n_nodes,
                raw.n_nodes()
            )));
        }
        let splits = chronological_split(raw.len(), fractions)?;
        let series = raw.map_values(|x| normalizer.normalize(x));
        Ok(Self {
            series,
            graph,
            splits,
            normalizer,
        })
    }

    /// The series back in original units.
    pub fn raw(&self) -> TrafficSeries {
        self.series.map_values(|x| self.normalizer.denormalize(x))
    }
}

/// Mean squared error of eval-mode forecasts over the validation range,
/// in normalized units.
pub fn validation_loss(model: &Model, data: &PreparedData, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in make_windows_ordered(&data.series, data.splits.val.clone(), cfg.p, cfg.k, cfg.batch_size)? {
        let pred = predict(model, &batch.history, &data.graph, cfg.variant)?;
        let n = pred.len();
        total += mse(&pred, &batch.future)? * n as f64;
        count += n;
    }
    Ok(total / count.max(1) as f64)
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    pub checkpoint_dir: Option<PathBuf>,
    /// Stored verbatim in every checkpoint.
    pub config_text: String,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Losses of every training step, in order.
    pub history: Vec<LossBundle>,
    /// Validation prediction loss after each epoch.
    pub val_history: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub best_params: ParamStore,
    pub stopped_early: bool,
}

fn epoch_mean(bundles: &[LossBundle]) -> LossBundle {
    let n = bundles.len().max(1) as f64;
    let avg = |f: fn(&LossBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
    let last = bundles.last();
    LossBundle {
        l_pred: avg(|b| b.l_pred),
        l_sts_b: avg(|b| b.l_sts_b),
        l_sts_s: avg(|b| b.l_sts_s),
        l_sc: avg(|b| b.l_sc),
        total: avg(|b| b.total),
        epoch: last.map_or(0, |b| b.epoch),
        step: last.map_or(0, |b| b.step),
    }
}

/// Train for up to `cfg.epochs` epochs with early stopping on validation
/// loss. On return the state holds the best parameters seen.
pub fn fit(state: &mut TrainState, data: &PreparedData, cfg: &TrainConfig, opts: &FitOptions) -> Result<FitReport> {
    cfg.validate()?;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let save = |state: &TrainState, name: &str| -> Result<()> {
        if let Some(dir) = &opts.checkpoint_dir {
            Checkpoint::capture(state, cfg.seed, data.normalizer, &opts.config_text).write(&dir.join(name))?;
        }
        Ok(())
    };

    let mut history = Vec::new();
    let mut val_history = Vec::new();
    let mut best = (0usize, f64::INFINITY, state.model.store.clone());
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let order_seed = rng::derive(cfg.seed, &[stream::EPOCH, epoch as u64]);
        let batches = make_windows(&data.series, data.splits.train.clone(), cfg.p, cfg.k, cfg.batch_size, order_seed)?;
        let first = history.len();
        for batch in batches {
            let mut b = train_step(state, &batch, &data.graph, cfg)?;
            b.epoch = epoch;
            history.push(b);
        }
        let mean = epoch_mean(&history[first..]);
        let val = validation_loss(&state.model, data, cfg)?;
        log::info!(
            "epoch {epoch}: total {:.5} pred {:.5} sts {:.5}/{:.5} sc {:.5} val {val:.5}",
            mean.total,
            mean.l_pred,
            mean.l_sts_b,
            mean.l_sts_s,
            mean.l_sc
        );
        val_history.push(val);
        if val < best.1 {
            best = (epoch, val, state.model.store.clone());
            since_best = 0;
            save(state, "best.ckpt")?;
        } else {
            since_best += 1;
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            save(state, &format!("epoch_{:04}.ckpt", epoch + 1))?;
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    save(state, "last.ckpt")?;
    let (best_epoch, best_val, best_params) = best;
    state.model.store.load_from(&best_params)?;
    Ok(FitReport {
        history,
        val_history,
        best_epoch,
        best_val,
        best_params,
        stopped_early,
    })
}
