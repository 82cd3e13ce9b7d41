use std::ops::Range;

use chrono::Timelike;

use crate::error::Result;
use crate::graph_data::{make_windows_ordered, TrafficSeries, WindowBatch};
use crate::tensor::Tensor;

use super::metrics::{compute_metrics, Metrics};

/// Repeat the last observed step over the horizon.
pub fn persistence(batch: &WindowBatch) -> Tensor {
    let (b, p, n, d) = (batch.len(), batch.p(), batch.n_nodes(), batch.d_in());
    let k = batch.k();
    Tensor::from_fn(&[b, k, n, d], |ix| batch.history.at(&[ix[0], p - 1, ix[2], ix[3]]))
}

/// Time-of-day slot of step `t`.
pub fn day_slot(series: &TrafficSeries, t: usize) -> usize {
    let ts = series.timestamp(t);
    let minutes = ts.hour() as usize * 60 + ts.minute() as usize;
    minutes / series.interval_minutes as usize % series.steps_per_day
}

/// Per-node mean of the training range at each time of day.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoricalAverage {
    /// `steps_per_day × N × d_in`.
    pub profile: Tensor,
}

impl HistoricalAverage {
    pub fn fit(series: &TrafficSeries, train: Range<usize>) -> Self {
        let (n, d, spd) = (series.n_nodes(), series.d_in(), series.steps_per_day);
        let mut sums = Tensor::zeros(&[spd, n, d]);
        let mut counts = vec![0usize; spd];
        let mut overall = Tensor::zeros(&[n, d]);
        for t in train.clone() {
            let s = day_slot(series, t);
            counts[s] += 1;
            for i in 0..n {
                for c in 0..d {
                    let v = series.at(t, i, c);
                    sums.set(&[s, i, c], sums.at(&[s, i, c]) + v);
                    overall.set(&[i, c], overall.at(&[i, c]) + v);
                }
            }
        }
        let total = train.len().max(1) as f64;
        let profile = Tensor::from_fn(&[spd, n, d], |ix| {
            if counts[ix[0]] > 0 {
                sums.at(ix) / counts[ix[0]] as f64
            } else {
                overall.at(&[ix[1], ix[2]]) / total
            }
        });
        Self { profile }
    }

    pub fn predict(&self, series: &TrafficSeries, batch: &WindowBatch) -> Tensor {
        let (b, k, n, d) = (batch.len(), batch.k(), batch.n_nodes(), batch.d_in());
        Tensor::from_fn(&[b, k, n, d], |ix| {
            let slot = day_slot(series, batch.anchors[ix[0]] + 1 + ix[1]);
            self.profile.at(&[slot, ix[2], ix[3]])
        })
    }
}

/// Persistence and historical-average scores over `eval`.
pub fn naive_baselines(
    series: &TrafficSeries,
    train: Range<usize>,
    eval: Range<usize>,
    p: usize,
    k: usize,
    mape_floor: f64,
) -> Result<Vec<(&'static str, Metrics)>> {
    let ha = HistoricalAverage::fit(series, train);
    let mut truth = Vec::new();
    let mut last = Vec::new();
    let mut avg = Vec::new();
    for batch in make_windows_ordered(series, eval, p, k, 256)? {
        last.push(persistence(&batch));
        avg.push(ha.predict(series, &batch));
        truth.push(batch.future);
    }
    let cat = |v: &[Tensor]| {
        let refs: Vec<&Tensor> = v.iter().collect();
        Tensor::concat(&refs, 0)
    };
    let truth = cat(&truth)?;
    Ok(vec![
        ("persistence", compute_metrics(&cat(&last)?, &truth, mape_floor)?),
        ("historical_average", compute_metrics(&cat(&avg)?, &truth, mape_floor)?),
    ])
}
