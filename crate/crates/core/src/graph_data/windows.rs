use std::ops::Range;

use rand::seq::SliceRandom;

use super::{CalendarDay, TrafficSeries};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Aligned history, future and lagged windows for a batch of anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// `B × P × N × d_in`, ending at the anchor.
    pub history: Tensor,
    /// `B × K × N × d_in`, the steps after the anchor.
    pub future: Tensor,
    /// `B × P × N × d_in`, one day earlier than `history`.
    pub day_lag: Tensor,
    /// `B × P × N × d_in`, one week earlier than `history`.
    pub week_lag: Tensor,
    /// Samples whose day lag precedes the series start and holds a copy of history.
    pub day_lag_copied: Vec<bool>,
    pub week_lag_copied: Vec<bool>,
    /// End timestamps τ of each history window.
    pub anchors: Vec<usize>,
    pub anchor_calendar: Vec<CalendarDay>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn p(&self) -> usize {
        self.history.dim(1)
    }

    pub fn k(&self) -> usize {
        self.future.dim(1)
    }

    pub fn n_nodes(&self) -> usize {
        self.history.dim(2)
    }

    pub fn d_in(&self) -> usize {
        self.history.dim(3)
    }

    /// Assemble a batch from explicit anchors.
    pub fn gather(series: &TrafficSeries, anchors: &[usize], p: usize, k: usize) -> Self {
        let (n, d) = (series.n_nodes(), series.d_in());
        let step = n * d;
        let src = series.values.data();
        let window = |start: usize, len: usize| &src[start * step..(start + len) * step];
        let b = anchors.len();
        let mut history = Vec::with_capacity(b * p * step);
        let mut future = Vec::with_capacity(b * k * step);
        let mut day = Vec::with_capacity(b * p * step);
        let mut week = Vec::with_capacity(b * p * step);
        let mut day_copied = Vec::with_capacity(b);
        let mut week_copied = Vec::with_capacity(b);
        for &tau in anchors {
            let h0 = tau + 1 - p;
            let hist = window(h0, p);
            history.extend_from_slice(hist);
            future.extend_from_slice(window(tau + 1, k));
            for (lag, buf, flags) in [
                (series.steps_per_day, &mut day, &mut day_copied),
                (series.steps_per_week, &mut week, &mut week_copied),
            ] {
                if h0 >= lag {
                    buf.extend_from_slice(window(h0 - lag, p));
                    flags.push(false);
                } else {
                    buf.extend_from_slice(hist);
                    flags.push(true);
                }
            }
        }
        let hs = vec![b, p, n, d];
        Self {
            history: Tensor::from_parts(hs.clone(), history),
            future: Tensor::from_parts(vec![b, k, n, d], future),
            day_lag: Tensor::from_parts(hs.clone(), day),
            week_lag: Tensor::from_parts(hs, week),
            day_lag_copied: day_copied,
            week_lag_copied: week_copied,
            anchors: anchors.to_vec(),
            anchor_calendar: anchors.iter().map(|&t| series.calendar[t]).collect(),
        }
    }

    /// Relabel the node axis of every tensor (see [`super::GraphSpec::permuted`]).
    pub fn permuted_nodes(&self, perm: &[usize]) -> Self {
        let inv = super::invert(perm);
        let pm = |t: &Tensor| Tensor::from_fn(t.shape(), |ix| t.at(&[ix[0], ix[1], inv[ix[2]], ix[3]]));
        Self {
            history: pm(&self.history),
            future: pm(&self.future),
            day_lag: pm(&self.day_lag),
            week_lag: pm(&self.week_lag),
            ..self.clone()
        }
    }
}

/// Batches over a split range in a seed-determined order.
#[derive(Clone, Debug)]
pub struct WindowStream<'a> {
    series: &'a TrafficSeries,
    anchors: Vec<usize>,
    p: usize,
    k: usize,
    batch_size: usize,
    pos: usize,
}

impl WindowStream<'_> {
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn num_batches(&self) -> usize {
        self.anchors.len().div_ceil(self.batch_size)
    }
}

impl Iterator for WindowStream<'_> {
    type Item = WindowBatch;

    fn next(&mut self) -> Option<WindowBatch> {
        if self.pos >= self.anchors.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.anchors.len());
        let batch = WindowBatch::gather(self.series, &self.anchors[self.pos..end], self.p, self.k);
        self.pos = end;
        Some(batch)
    }
}

fn anchors_in(range: &Range<usize>, p: usize, k: usize) -> Result<Vec<usize>> {
    if p == 0 || k == 0 {
        return Err(Error::Config("history and horizon lengths must be at least 1".into()));
    }
    if range.len() < p + k {
        return Err(Error::EmptyStream {
            start: range.start,
            end: range.end,
            p,
            k,
        });
    }
    // every index of the history and future windows lies inside the range
    Ok((range.start + p - 1..range.end - k).collect())
}

fn stream<'a>(
    series: &'a TrafficSeries,
    range: Range<usize>,
    p: usize,
    k: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<WindowStream<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if range.end > series.len() {
        return Err(Error::Config(format!("range {range:?} exceeds series length {}", series.len())));
    }
    let mut anchors = anchors_in(&range, p, k)?;
    if let Some(seed) = shuffle_seed {
        anchors.shuffle(&mut rng::rng(rng::derive(seed, &[rng::stream::SHUFFLE])));
    }
    Ok(WindowStream {
        series,
        anchors,
        p,
        k,
        batch_size,
        pos: 0,
    })
}

/// Shuffled batches; the order is a deterministic function of `seed`.
pub fn make_windows(
    series: &TrafficSeries,
    range: Range<usize>,
    p: usize,
    k: usize,
    batch_size: usize,
    seed: u64,
) -> Result<WindowStream<'_>> {
    stream(series, range, p, k, batch_size, Some(seed))
}

/// Batches in chronological anchor order, for evaluation.
pub fn make_windows_ordered(
    series: &TrafficSeries,
    range: Range<usize>,
    p: usize,
    k: usize,
    batch_size: usize,
) -> Result<WindowStream<'_>> {
    stream(series, range, p, k, batch_size, None)
}
