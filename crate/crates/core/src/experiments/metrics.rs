use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Errors of one set of forecasts. `mape` is a percentage, `None` when every
/// target fell under the floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
}

/// Printed in place of an undefined MAPE.
pub const UNDEFINED: &str = "undefined";

pub fn compute_metrics(pred: &Tensor, truth: &Tensor, mape_floor: f64) -> Result<Metrics> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("no forecasts to score".into()));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut counted = 0usize;
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let e = (p - t).abs();
        sq += e * e;
        abs += e;
        if t.abs() > mape_floor {
            pct += e / t.abs();
            counted += 1;
        }
    }
    let n = pred.len() as f64;
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: (counted > 0).then(|| 100.0 * pct / counted as f64),
    })
}

/// Mean over runs, with the sample standard deviation when there are at
/// least two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, std })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.4}±{:.4}", self.mean, s),
            None => write!(f, "{:.4}", self.mean),
        }
    }
}

/// Seed-aggregated metrics of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub label: String,
    pub config_hash: String,
    pub rmse: Summary,
    pub mae: Summary,
    /// Over the runs whose MAPE is defined; `None` if there are none.
    pub mape: Option<Summary>,
    /// Per-run rows, in seed order.
    pub runs: Vec<(u64, Metrics)>,
}

impl MetricReport {
    pub fn aggregate(label: &str, config_hash: &str, runs: Vec<(u64, Metrics)>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Config(format!("no runs to aggregate for '{label}'")));
        }
        let col = |f: fn(&Metrics) -> Option<f64>| runs.iter().filter_map(|(_, m)| f(m)).collect::<Vec<_>>();
        Ok(Self {
            label: label.to_string(),
            config_hash: config_hash.to_string(),
            rmse: Summary::of(&col(|m| Some(m.rmse))).expect("nonempty"),
            mae: Summary::of(&col(|m| Some(m.mae))).expect("nonempty"),
            mape: Summary::of(&col(|m| m.mape)),
            runs,
        })
    }

    pub fn n_seeds(&self) -> usize {
        self.runs.len()
    }
}
