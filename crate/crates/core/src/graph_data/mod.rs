//! Traffic graphs, observation series, splitting, windowing and synthetic data.

mod io;
mod split;
mod synth;
mod windows;

pub use io::{load_dataset, save_dataset, DatasetPaths};
pub use split::{chronological_split, SplitRanges};
pub use synth::{synth_traffic, synth_with, SynthOptions};
pub use windows::{make_windows, make_windows_ordered, WindowBatch, WindowStream};

use chrono::{Datelike, Duration, NaiveDateTime, Weekday};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of POI categories at the head of each semantic vector.
pub const POI_BINS: usize = 7;
/// POI fractions + day-of-week one-hot + is-weekend one-hot + is-holiday one-hot.
pub const SEMANTIC_DIM: usize = POI_BINS + 7 + 2 + 2;

/// Static description of a traffic network.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub n_nodes: usize,
    /// Binary, symmetric connectivity with unit diagonal.
    pub a_con: Tensor,
    /// Pairwise road distances; `f64::INFINITY` where no edge is recorded.
    pub a_dist: Option<Tensor>,
    /// `N × 2` planar coordinates.
    pub coords: Tensor,
    /// `N × Q` probability vectors.
    pub semantic: Tensor,
}

impl GraphSpec {
    /// Build from an undirected edge list: symmetrizes, adds self-loops and
    /// renormalizes semantic rows.
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(usize, usize)],
        distances: Option<&[f64]>,
        coords: Tensor,
        semantic: Tensor,
    ) -> Result<Self> {
        let mut a_con = Tensor::eye(n_nodes);
        let mut a_dist = distances.map(|_| {
            Tensor::from_fn(&[n_nodes, n_nodes], |ix| if ix[0] == ix[1] { 0.0 } else { f64::INFINITY })
        });
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::Domain(format!(
                    "edge {e} ({i}, {j}) references a node outside 0..{n_nodes}"
                )));
            }
            a_con.set(&[i, j], 1.0);
            a_con.set(&[j, i], 1.0);
            if let (Some(ad), Some(d)) = (a_dist.as_mut(), distances) {
                let dv = d[e];
                if !(dv >= 0.0) {
                    return Err(Error::Domain(format!("edge {e}: distance {dv} is not a nonnegative number")));
                }
                ad.set(&[i, j], dv);
                ad.set(&[j, i], dv);
            }
        }
        let semantic = normalize_rows(semantic)?;
        let g = Self {
            n_nodes,
            a_con,
            a_dist,
            coords,
            semantic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes;
        if n == 0 {
            return Err(Error::Domain("graph has no nodes".into()));
        }
        if self.a_con.shape() != [n, n] {
            return Err(Error::Shape(format!("a_con is {:?}, expected [{n}, {n}]", self.a_con.shape())));
        }
        if self.coords.shape() != [n, 2] {
            return Err(Error::Shape(format!("coords is {:?}, expected [{n}, 2]", self.coords.shape())));
        }
        if self.semantic.ndim() != 2 || self.semantic.dim(0) != n {
            return Err(Error::Shape(format!("semantic is {:?}, expected [{n}, Q]", self.semantic.shape())));
        }
        if let Some(d) = &self.a_dist {
            if d.shape() != [n, n] {
                return Err(Error::Shape(format!("a_dist is {:?}, expected [{n}, {n}]", d.shape())));
            }
        }
        for i in 0..n {
            if self.a_con.at(&[i, i]) != 1.0 {
                return Err(Error::Domain(format!("a_con[{i},{i}] must be 1")));
            }
            for j in 0..n {
                let v = self.a_con.at(&[i, j]);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Domain(format!("a_con[{i},{j}] = {v} is not binary")));
                }
                if v != self.a_con.at(&[j, i]) {
                    return Err(Error::Domain(format!("a_con is not symmetric at ({i},{j})")));
                }
            }
            let row = self.semantic.row(i);
            if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("semantic row {i} is not a probability vector")));
            }
        }
        if !self.coords.is_finite() {
            return Err(Error::Domain("coords contain non-finite values".into()));
        }
        Ok(())
    }

    /// Neighbours of `i` in `a_con`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n_nodes)
            .filter(|&j| j != i && self.a_con.at(&[i, j]) != 0.0)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n_nodes;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.a_con.at(&[i, j]) != 0.0)
            .count()
    }

    /// Semantic vectors at a given calendar position: the POI block is kept and
    /// the calendar one-hots are replaced. Graphs whose semantic width is not
    /// [`SEMANTIC_DIM`] are returned unchanged.
    pub fn semantic_at(&self, day: &CalendarDay) -> Tensor {
        if self.semantic.dim(1) != SEMANTIC_DIM {
            return self.semantic.clone();
        }
        let mut out = self.semantic.clone();
        for i in 0..self.n_nodes {
            let poi: Vec<f64> = self.semantic.row(i)[..POI_BINS].to_vec();
            let row = semantic_row(&poi, day);
            for (q, v) in row.into_iter().enumerate() {
                out.set(&[i, q], v);
            }
        }
        out
    }

    /// Relabel nodes: node `perm[i]` of the result is node `i` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes;
        let inv = invert(perm);
        let sq = |t: &Tensor| Tensor::from_fn(&[n, n], |ix| t.at(&[inv[ix[0]], inv[ix[1]]]));
        let rows = |t: &Tensor| Tensor::from_fn(t.shape(), |ix| t.at(&[inv[ix[0]], ix[1]]));
        Self {
            n_nodes: n,
            a_con: sq(&self.a_con),
            a_dist: self.a_dist.as_ref().map(sq),
            coords: rows(&self.coords),
            semantic: rows(&self.semantic),
        }
    }
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// L1-normalized semantic vector from POI fractions and a calendar position.
pub fn semantic_row(poi: &[f64], day: &CalendarDay) -> Vec<f64> {
    let mut row = Vec::with_capacity(SEMANTIC_DIM);
    let s: f64 = poi.iter().sum();
    row.extend(poi.iter().map(|p| if s > 0.0 { p / s } else { 0.0 }));
    let mut dow = [0.0; 7];
    dow[day.day_of_week as usize] = 1.0;
    row.extend(dow);
    row.extend(if day.is_weekend { [0.0, 1.0] } else { [1.0, 0.0] });
    row.extend(if day.is_holiday { [0.0, 1.0] } else { [1.0, 0.0] });
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

fn normalize_rows(mut t: Tensor) -> Result<Tensor> {
    if t.ndim() != 2 {
        return Err(Error::Shape(format!("semantic must be 2-D, got {:?}", t.shape())));
    }
    let q = t.dim(1);
    for (i, row) in t.data_mut().chunks_mut(q).enumerate() {
        if row.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain(format!("semantic row {i} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            return Err(Error::Domain(format!("semantic row {i} sums to zero")));
        }
        if (s - 1.0).abs() > 1e-12 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct CalendarDay {
    /// Monday = 0.
    pub day_of_week: u8,
    pub is_weekend: bool,
    pub is_holiday: bool,
}

impl CalendarDay {
    pub fn from_datetime(t: NaiveDateTime, is_holiday: bool) -> Self {
        let wd = t.weekday();
        Self {
            day_of_week: wd.num_days_from_monday() as u8,
            is_weekend: matches!(wd, Weekday::Sat | Weekday::Sun),
            is_holiday,
        }
    }
}

/// Timestamped `T × N × d_in` observations.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSeries {
    pub values: Tensor,
    pub interval_minutes: u32,
    pub steps_per_day: usize,
    pub steps_per_week: usize,
    pub start: NaiveDateTime,
    pub calendar: Vec<CalendarDay>,
}

impl TrafficSeries {
    pub fn new(values: Tensor, interval_minutes: u32, start: NaiveDateTime, holidays: &[bool]) -> Result<Self> {
        if values.ndim() != 3 {
            return Err(Error::Shape(format!("series values must be T×N×d_in, got {:?}", values.shape())));
        }
        if interval_minutes == 0 || 1440 % interval_minutes != 0 {
            return Err(Error::Config(format!(
                "interval of {interval_minutes} minutes does not divide a day"
            )));
        }
        let t_len = values.dim(0);
        if holidays.len() != t_len {
            return Err(Error::Shape(format!("{} holiday flags for {t_len} steps", holidays.len())));
        }
        let (n, d) = (values.dim(1), values.dim(2));
        if let Some(pos) = values.data().iter().position(|x| !x.is_finite()) {
            let (t, node) = (pos / (n * d), (pos / d) % n);
            return Err(Error::Domain(format!("non-finite value at (t={t}, node={node})")));
        }
        let steps_per_day = (1440 / interval_minutes) as usize;
        let calendar = (0..t_len)
            .map(|t| {
                let ts = start + Duration::minutes(t as i64 * interval_minutes as i64);
                CalendarDay::from_datetime(ts, holidays[t])
            })
            .collect();
        Ok(Self {
            values,
            interval_minutes,
            steps_per_day,
            steps_per_week: 7 * steps_per_day,
            start,
            calendar,
        })
    }

    pub fn len(&self) -> usize {
        self.values.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.values.dim(1)
    }

    pub fn d_in(&self) -> usize {
        self.values.dim(2)
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + Duration::minutes(t as i64 * self.interval_minutes as i64)
    }

    pub fn holidays(&self) -> Vec<bool> {
        self.calendar.iter().map(|c| c.is_holiday).collect()
    }

    /// Observation at `(t, node, channel)`.
    pub fn at(&self, t: usize, node: usize, c: usize) -> f64 {
        let (n, d) = (self.n_nodes(), self.d_in());
        self.values.data()[(t * n + node) * d + c]
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.map(f),
            ..self.clone()
        }
    }

    pub fn permuted_nodes(&self, perm: &[usize]) -> Self {
        let inv = invert(perm);
        let v = &self.values;
        Self {
            values: Tensor::from_fn(v.shape(), |ix| v.at(&[ix[0], inv[ix[1]], ix[2]])),
            ..self.clone()
        }
    }
}

/// Global z-score normalization fitted on a training range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn fit(series: &TrafficSeries, range: std::ops::Range<usize>) -> Self {
        let (n, d) = (series.n_nodes(), series.d_in());
        let data = &series.values.data()[range.start * n * d..range.end * n * d];
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / data.len() as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.std + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> CalendarDay {
        CalendarDay {
            day_of_week: 5,
            is_weekend: true,
            is_holiday: false,
        }
    }

    #[test]
    fn from_edges_symmetrizes_and_adds_self_loops() {
        let g = GraphSpec::from_edges(
            3,
            &[(0, 1)],
            None,
            Tensor::zeros(&[3, 2]),
            Tensor::ones(&[3, 2]),
        )
        .unwrap();
        assert_eq!(g.a_con.data(), &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.semantic.row(0), &[0.5, 0.5]);
        assert_eq!(g.neighbors(1), vec![0]);
    }

    #[test]
    fn from_edges_rejects_out_of_range_node() {
        let err = GraphSpec::from_edges(2, &[(0, 2)], None, Tensor::zeros(&[2, 2]), Tensor::ones(&[2, 1]));
        assert!(err.is_err());
    }

    #[test]
    fn semantic_row_is_probability_vector() {
        let row = semantic_row(&[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0], &day());
        assert_eq!(row.len(), SEMANTIC_DIM);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(row[POI_BINS + 5], 0.25);
        assert_eq!(row[POI_BINS + 7 + 1], 0.25);
    }

    #[test]
    fn series_rejects_nan_with_location() {
        let mut v = Tensor::zeros(&[4, 3, 1]);
        v.set(&[2, 1, 0], f64::NAN);
        let start = NaiveDateTime::parse_from_str("2019-01-01 00:00", "%Y-%m-%d %H:%M").unwrap();
        let err = TrafficSeries::new(v, 10, start, &[false; 4]).unwrap_err();
        assert!(err.to_string().contains("t=2, node=1"), "{err}");
    }

    #[test]
    fn permuted_graph_moves_rows() {
        let g = GraphSpec::from_edges(
            3,
            &[(0, 1)],
            None,
            Tensor::from_fn(&[3, 2], |ix| ix[0] as f64),
            Tensor::ones(&[3, 1]),
        )
        .unwrap();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.coords.at(&[2, 0]), 0.0);
        assert_eq!(p.a_con.at(&[2, 0]), 1.0);
        assert_eq!(p.a_con.at(&[1, 2]), 0.0);
    }
}
