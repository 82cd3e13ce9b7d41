//! Seeded synthetic traffic on a ring-plus-chords road graph.

use std::f64::consts::PI;

use chrono::NaiveDateTime;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{semantic_row, CalendarDay, GraphSpec, TrafficSeries, POI_BINS};
use crate::error::{Error, Result};
use crate::nn::row_normalize;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub n_nodes: usize,
    pub days: usize,
    pub interval_minutes: u32,
    pub seed: u64,
    /// Standard deviation of the per-step noise before graph diffusion.
    pub noise_std: f64,
    /// Relative amplitude of the weekly modulation of the daily cycle.
    pub weekly_amplitude: f64,
    /// Mark the first day as a holiday.
    pub first_day_holiday: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_nodes: 12,
            days: 10,
            interval_minutes: 30,
            seed: 0,
            noise_std: 2.0,
            weekly_amplitude: 0.15,
            first_day_holiday: true,
        }
    }
}

pub fn synth_traffic(
    n_nodes: usize,
    days: usize,
    interval_minutes: u32,
    seed: u64,
) -> Result<(TrafficSeries, GraphSpec)> {
    synth_with(&SynthOptions {
        n_nodes,
        days,
        interval_minutes,
        seed,
        ..SynthOptions::default()
    })
}

pub fn synth_with(opts: &SynthOptions) -> Result<(TrafficSeries, GraphSpec)> {
    let n = opts.n_nodes;
    if n < 4 {
        return Err(Error::Config(format!("synthetic graph needs at least 4 nodes, got {n}")));
    }
    if opts.days < 8 {
        return Err(Error::Config(format!(
            "synthetic series needs at least 8 days for the week lag, got {}",
            opts.days
        )));
    }
    if opts.interval_minutes == 0 || 1440 % opts.interval_minutes != 0 {
        return Err(Error::Config(format!(
            "interval of {} minutes does not divide a day",
            opts.interval_minutes
        )));
    }
    let mut r = rng::rng(opts.seed);
    let start = NaiveDateTime::parse_from_str("2019-01-01 00:00", "%Y-%m-%d %H:%M").expect("literal date");

    let coords = Tensor::from_fn(&[n, 2], |ix| {
        let angle = 2.0 * PI * ix[0] as f64 / n as f64;
        let base = if ix[1] == 0 { angle.cos() } else { angle.sin() };
        10.0 * base + r.gen_range(-0.5..0.5)
    });
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for i in (0..n).step_by(3) {
        let j = (i + n / 2) % n;
        let dup = edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
        if j != i && !dup {
            edges.push((i, j));
        }
    }
    let dist: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| {
            let dx = coords.at(&[i, 0]) - coords.at(&[j, 0]);
            let dy = coords.at(&[i, 1]) - coords.at(&[j, 1]);
            (dx * dx + dy * dy).sqrt()
        })
        .collect();
    let first_day = CalendarDay::from_datetime(start, opts.first_day_holiday);
    let sem_rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let poi: Vec<f64> = (0..POI_BINS).map(|_| r.gen_range(0.05..1.0)).collect();
            semantic_row(&poi, &first_day)
        })
        .collect();
    let graph = GraphSpec::from_edges(n, &edges, Some(&dist), coords, Tensor::from_rows(&sem_rows)?)?;

    let steps_per_day = (1440 / opts.interval_minutes) as usize;
    let steps_per_week = 7 * steps_per_day;
    let t_len = opts.days * steps_per_day;
    let base: Vec<f64> = (0..n).map(|_| r.gen_range(40.0..60.0)).collect();
    let amp: Vec<f64> = (0..n).map(|_| r.gen_range(10.0..20.0)).collect();
    let phase: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..0.6)).collect();
    let diffuse = row_normalize(&graph.a_con);
    let mut values = Vec::with_capacity(t_len * n);
    for t in 0..t_len {
        let day_angle = 2.0 * PI * t as f64 / steps_per_day as f64;
        let week_mod = 1.0 + opts.weekly_amplitude * (2.0 * PI * t as f64 / steps_per_week as f64).cos();
        let noise: Vec<f64> = (0..n).map(|_| opts.noise_std * r.sample::<f64, _>(StandardNormal)).collect();
        for i in 0..n {
            let mixed: f64 = diffuse.row(i).iter().zip(&noise).map(|(a, e)| a * e).sum();
            values.push(base[i] + amp[i] * week_mod * (day_angle - phase[i]).sin() + mixed);
        }
    }
    let holidays: Vec<bool> = (0..t_len)
        .map(|t| opts.first_day_holiday && t < steps_per_day)
        .collect();
    let series = TrafficSeries::new(Tensor::new(vec![t_len, n, 1], values)?, opts.interval_minutes, start, &holidays)?;
    Ok((series, graph))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let cov: f64 = (0..x.len() - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
        cov / var
    }

    #[test]
    fn deterministic_for_seed() {
        let a = synth_traffic(12, 10, 30, 7).unwrap();
        let b = synth_traffic(12, 10, 30, 7).unwrap();
        assert_eq!(a, b);
        let bits = |s: &TrafficSeries| s.values.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.0), bits(&b.0));
        assert_ne!(a.0, synth_traffic(12, 10, 30, 8).unwrap().0);
    }

    #[test]
    fn daily_periodicity_dominates() {
        let (s, _) = synth_traffic(12, 10, 30, 7).unwrap();
        for node in 0..12 {
            let x: Vec<f64> = (0..s.len()).map(|t| s.at(t, node, 0)).collect();
            let full = autocorr(&x, s.steps_per_day);
            let half = autocorr(&x, s.steps_per_day / 2);
            assert!(full > half, "node {node}: {full} <= {half}");
        }
    }

    #[test]
    fn ring_graph_degrees() {
        let (_, g) = synth_traffic(12, 10, 30, 7).unwrap();
        for i in 0..12 {
            let deg: f64 = g.a_con.row(i).iter().sum();
            assert!(deg >= 3.0, "node {i} has degree {deg}");
        }
        g.validate().unwrap();
        assert!(g.a_dist.is_some());
    }

    #[test]
    fn rejects_too_few_days() {
        assert!(matches!(synth_traffic(12, 7, 30, 0), Err(Error::Config(_))));
        assert!(matches!(synth_traffic(3, 10, 30, 0), Err(Error::Config(_))));
    }

    #[test]
    fn shape_and_calendar() {
        let (s, g) = synth_traffic(6, 9, 60, 1).unwrap();
        assert_eq!(s.values.shape(), &[9 * 24, 6, 1]);
        assert_eq!(s.steps_per_week, 7 * 24);
        assert_eq!(g.semantic.dim(1), super::super::SEMANTIC_DIM);
        // 2019-01-01 was a Tuesday
        assert_eq!(s.calendar[0].day_of_week, 1);
        assert!(s.calendar[0].is_holiday && !s.calendar[24].is_holiday);
        assert!(s.calendar[4 * 24].is_weekend);
    }
}
