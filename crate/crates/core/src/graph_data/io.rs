//! Dataset files.
//!
//! Series: CSV with header `timestamp,node_0,...,node_{N-1}[,is_holiday]`
//! (one feature channel, timestamps `YYYY-MM-DD HH:MM`), or a `.stsc`
//! container holding `values[T,N,d_in]`, `interval_minutes`, `calendar[T,3]`
//! and a `start` text entry.
//!
//! Graph: CSV edge list `i,j` or `i,j,dist`, with sibling files
//! `<stem>_coords.csv` (`x,y`) and `<stem>_semantic.csv` (`q0,...`), or a
//! `.stsc` container holding `edges[E,2]`, optional `dist[E]`, `coords[N,2]`
//! and `semantic[N,Q]`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::{GraphSpec, TrafficSeries};
use crate::container::ArrayFile;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TS_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub series: PathBuf,
    pub graph: PathBuf,
}

fn is_container(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "stsc")
}

pub fn load_dataset(series_path: &Path, graph_path: &Path) -> Result<(TrafficSeries, GraphSpec)> {
    let series = if is_container(series_path) {
        load_series_container(series_path)?
    } else {
        load_series_csv(series_path)?
    };
    let graph = if is_container(graph_path) {
        load_graph_container(graph_path)?
    } else {
        load_graph_csv(graph_path)?
    };
    if series.n_nodes() != graph.n_nodes {
        return Err(Error::load(
            series_path,
            format!(
                "series has {} nodes but graph {} has {}",
                series.n_nodes(),
                graph_path.display(),
                graph.n_nodes
            ),
        ));
    }
    Ok((series, graph))
}

fn parse_f64(s: &str, path: &Path, row: usize, field: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::load(path, format!("row {row}, field `{field}`: cannot parse `{s}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::load(path, format!("row {row}, field `{field}`: non-finite value `{s}`")));
    }
    Ok(v)
}

fn load_series_csv(path: &Path) -> Result<TrafficSeries> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::load(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::load(path, e.to_string()))?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(Error::load(path, "header must start with `timestamp`"));
    }
    let has_holiday = headers.iter().last() == Some("is_holiday");
    let node_cols = headers.len() - 1 - usize::from(has_holiday);
    for (i, h) in headers.iter().skip(1).take(node_cols).enumerate() {
        if h != format!("node_{i}") {
            return Err(Error::load(path, format!("header column {} is `{h}`, expected `node_{i}`", i + 1)));
        }
    }
    if node_cols == 0 {
        return Err(Error::load(path, "header lists no node columns"));
    }
    let mut values = Vec::new();
    let mut stamps = Vec::new();
    let mut holidays = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::load(path, format!("row {row}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::load(path, format!("row {row}: {} fields, expected {}", rec.len(), headers.len())));
        }
        let ts = NaiveDateTime::parse_from_str(rec[0].trim(), TS_FORMAT)
            .map_err(|e| Error::load(path, format!("row {row}, field `timestamp`: {e}")))?;
        stamps.push(ts);
        for node in 0..node_cols {
            let field = &rec[node + 1];
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::load(path, format!("row {row} (t={row}, node={node}): cannot parse `{field}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::load(path, format!("non-finite value at (t={row}, node={node})")));
            }
            values.push(v);
        }
        if has_holiday {
            holidays.push(parse_f64(&rec[headers.len() - 1], path, row, "is_holiday")? != 0.0);
        } else {
            holidays.push(false);
        }
    }
    if stamps.len() < 2 {
        return Err(Error::load(path, "need at least two rows to infer the interval"));
    }
    let interval = (stamps[1] - stamps[0]).num_minutes();
    if interval <= 0 {
        return Err(Error::load(path, "row 1: timestamps are not increasing"));
    }
    for (row, w) in stamps.windows(2).enumerate() {
        if (w[1] - w[0]).num_minutes() != interval {
            return Err(Error::load(
                path,
                format!("row {}, field `timestamp`: irregular interval (expected {interval} minutes)", row + 1),
            ));
        }
    }
    let t_len = stamps.len();
    let values = Tensor::new(vec![t_len, node_cols, 1], values)?;
    TrafficSeries::new(values, interval as u32, stamps[0], &holidays).map_err(|e| Error::load(path, e.to_string()))
}

fn load_series_container(path: &Path) -> Result<TrafficSeries> {
    let f = ArrayFile::read(path)?;
    let values = f.require_array("values", path)?.clone();
    if values.ndim() != 3 {
        return Err(Error::load(path, format!("`values` must be [T,N,d_in], got {:?}", values.shape())));
    }
    let interval = f.require_scalar("interval_minutes", path)?;
    let calendar = f.require_array("calendar", path)?;
    if calendar.shape() != [values.dim(0), 3] {
        return Err(Error::load(
            path,
            format!("`calendar` is {:?}, expected [{}, 3]", calendar.shape(), values.dim(0)),
        ));
    }
    let start = f
        .text("start")
        .ok_or_else(|| Error::load(path, "missing text entry `start`"))?;
    let start = NaiveDateTime::parse_from_str(start, TS_FORMAT)
        .map_err(|e| Error::load(path, format!("field `start`: {e}")))?;
    let holidays: Vec<bool> = (0..values.dim(0)).map(|t| calendar.at(&[t, 2]) != 0.0).collect();
    let series = TrafficSeries::new(values, interval as u32, start, &holidays)
        .map_err(|e| Error::load(path, e.to_string()))?;
    for t in 0..series.len() {
        if calendar.at(&[t, 0]) as u8 != series.calendar[t].day_of_week {
            return Err(Error::load(path, format!("calendar row {t}: day-of-week disagrees with `start`")));
        }
    }
    Ok(series)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn read_matrix_csv(path: &Path, expect_cols: Option<usize>) -> Result<Tensor> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::load(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::load(path, e.to_string()))?.clone();
    let cols = headers.len();
    if let Some(c) = expect_cols {
        if cols != c {
            return Err(Error::load(path, format!("header has {cols} columns, expected {c}")));
        }
    }
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::load(path, format!("row {row}: {e}")))?;
        if rec.len() != cols {
            return Err(Error::load(path, format!("row {row}: {} fields, expected {cols}", rec.len())));
        }
        let r: Result<Vec<f64>> = rec
            .iter()
            .zip(headers.iter())
            .map(|(v, h)| parse_f64(v, path, row, h))
            .collect();
        rows.push(r?);
    }
    Tensor::from_rows(&rows)
}

fn load_graph_csv(path: &Path) -> Result<GraphSpec> {
    let coords = read_matrix_csv(&sibling(path, "coords"), Some(2))?;
    let semantic = read_matrix_csv(&sibling(path, "semantic"), None)?;
    let n = coords.dim(0);
    if semantic.dim(0) != n {
        return Err(Error::load(path, format!("{n} coordinate rows but {} semantic rows", semantic.dim(0))));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::load(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::load(path, e.to_string()))?.clone();
    let with_dist = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["i", "j"] => false,
        ["i", "j", "dist"] => true,
        _ => return Err(Error::load(path, "edge list header must be `i,j` or `i,j,dist`")),
    };
    let mut edges = Vec::new();
    let mut dists = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::load(path, format!("row {row}: {e}")))?;
        let idx = |k: usize, name: &str| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::load(path, format!("row {row}, field `{name}`: not a node index")))
        };
        edges.push((idx(0, "i")?, idx(1, "j")?));
        if with_dist {
            dists.push(parse_f64(rec.get(2).unwrap_or(""), path, row, "dist")?);
        }
    }
    GraphSpec::from_edges(n, &edges, with_dist.then_some(dists.as_slice()), coords, semantic)
        .map_err(|e| Error::load(path, e.to_string()))
}

fn load_graph_container(path: &Path) -> Result<GraphSpec> {
    let f = ArrayFile::read(path)?;
    let coords = f.require_array("coords", path)?.clone();
    let semantic = f.require_array("semantic", path)?.clone();
    let e = f.require_array("edges", path)?;
    if e.ndim() != 2 || e.dim(1) != 2 {
        return Err(Error::load(path, format!("`edges` must be [E,2], got {:?}", e.shape())));
    }
    let edges: Vec<(usize, usize)> = (0..e.dim(0)).map(|r| (e.at(&[r, 0]) as usize, e.at(&[r, 1]) as usize)).collect();
    let dist = f.array("dist").map(|d| d.data().to_vec());
    if coords.ndim() != 2 {
        return Err(Error::load(path, "`coords` must be [N,2]"));
    }
    GraphSpec::from_edges(coords.dim(0), &edges, dist.as_deref(), coords, semantic)
        .map_err(|err| Error::load(path, err.to_string()))
}

fn edge_list(graph: &GraphSpec) -> Vec<(usize, usize)> {
    let n = graph.n_nodes;
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| graph.a_con.at(&[i, j]) != 0.0)
        .collect()
}

/// Write a dataset into `dir`: CSV for single-channel series, a container
/// otherwise, and a CSV edge list with its coordinate and semantic siblings.
pub fn save_dataset(dir: &Path, series: &TrafficSeries, graph: &GraphSpec) -> Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let series_path = if series.d_in() == 1 {
        let path = dir.join("series.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["timestamp".to_string()];
        header.extend((0..series.n_nodes()).map(|i| format!("node_{i}")));
        header.push("is_holiday".into());
        w.write_record(&header)?;
        for t in 0..series.len() {
            let mut rec = vec![series.timestamp(t).format(TS_FORMAT).to_string()];
            rec.extend((0..series.n_nodes()).map(|n| series.at(t, n, 0).to_string()));
            rec.push(u8::from(series.calendar[t].is_holiday).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        path
    } else {
        let path = dir.join("series.stsc");
        let mut f = ArrayFile::new();
        f.insert_array("values", series.values.clone());
        f.insert_scalar("interval_minutes", series.interval_minutes as f64);
        let cal: Vec<Vec<f64>> = series
            .calendar
            .iter()
            .map(|c| vec![c.day_of_week as f64, f64::from(u8::from(c.is_weekend)), f64::from(u8::from(c.is_holiday))])
            .collect();
        f.insert_array("calendar", Tensor::from_rows(&cal)?);
        f.insert_text("start", series.start.format(TS_FORMAT).to_string());
        f.write(&path)?;
        path
    };

    let graph_path = dir.join("graph.csv");
    let mut w = csv::Writer::from_path(&graph_path)?;
    let edges = edge_list(graph);
    match &graph.a_dist {
        Some(d) => {
            w.write_record(["i", "j", "dist"])?;
            for (i, j) in edges {
                w.write_record([i.to_string(), j.to_string(), d.at(&[i, j]).to_string()])?;
            }
        }
        None => {
            w.write_record(["i", "j"])?;
            for (i, j) in edges {
                w.write_record([i.to_string(), j.to_string()])?;
            }
        }
    }
    w.flush()?;
    write_matrix_csv(&sibling(&graph_path, "coords"), &["x".into(), "y".into()], &graph.coords)?;
    let q_header: Vec<String> = (0..graph.semantic.dim(1)).map(|q| format!("q{q}")).collect();
    write_matrix_csv(&sibling(&graph_path, "semantic"), &q_header, &graph.semantic)?;
    Ok(DatasetPaths {
        series: series_path,
        graph: graph_path,
    })
}

fn write_matrix_csv(path: &Path, header: &[String], t: &Tensor) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in 0..t.dim(0) {
        w.write_record(t.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
