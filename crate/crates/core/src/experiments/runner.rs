use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph_data::{
    load_dataset, make_windows_ordered, save_dataset, synth_with, DatasetPaths, GraphSpec, SynthOptions, TrafficSeries,
};
use crate::tensor::Tensor;
use crate::training::{
    config_hash, fit, predict, Checkpoint, FitOptions, FitReport, LossBundle, Model, PreparedData, TrainState, Variant,
};

use super::baselines::naive_baselines;
use super::config::{resolve_alias, DataSource, ExperimentConfig};
use super::metrics::{compute_metrics, MetricReport, Metrics, Summary as MetricSummary, UNDEFINED};
use super::plot::{write_png, Panel};

/// Label of the trained model's rows in per-run metric files.
pub const MODEL_ROW: &str = "model";
/// Per-run test scores of the model and the reference predictors.
pub const RUN_METRICS: &str = "run_metrics.csv";
/// Written by `evaluate`.
pub const EVALUATION: &str = "evaluation.csv";

/// `generate-synthetic` command.
pub fn generate_synthetic(opts: &SynthOptions, out: &Path) -> Result<DatasetPaths> {
    let (series, graph) = synth_with(opts)?;
    save_dataset(out, &series, &graph)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<(TrafficSeries, GraphSpec)> {
    match &cfg.data.source {
        DataSource::Synthetic => synth_with(&cfg.data.synth),
        DataSource::Files { series, graph } => load_dataset(series, graph),
    }
}

/// Test-range metrics of `model` in original units.
pub fn test_metrics(model: &Model, data: &PreparedData, raw: &TrafficSeries, cfg: &ExperimentConfig) -> Result<Metrics> {
    let (p, k, bs) = (cfg.train.p, cfg.train.k, cfg.train.batch_size);
    let norm = make_windows_ordered(&data.series, data.splits.test.clone(), p, k, bs)?;
    let orig = make_windows_ordered(raw, data.splits.test.clone(), p, k, bs)?;
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (nb, rb) in norm.zip(orig) {
        let y = predict(model, &nb.history, &data.graph, cfg.train.variant)?;
        preds.push(y.map(|v| data.normalizer.denormalize(v)));
        truths.push(rb.future);
    }
    let cat = |v: &[Tensor]| Tensor::concat(&v.iter().collect::<Vec<_>>(), 0);
    compute_metrics(&cat(&preds)?, &cat(&truths)?, cfg.eval.mape_floor * data.normalizer.std)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string())
}

fn write_history(path: &Path, history: &[LossBundle]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "epoch", "l_pred", "l_sts_b", "l_sts_s", "l_sc", "total"])?;
    for b in history {
        w.write_record([
            b.step.to_string(),
            b.epoch.to_string(),
            b.l_pred.to_string(),
            b.l_sts_b.to_string(),
            b.l_sts_s.to_string(),
            b.l_sc.to_string(),
            b.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_val(path: &Path, val: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "val_l_pred"])?;
    for (e, v) in val.iter().enumerate() {
        w.write_record([e.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `label,seed,predictor,rmse,mae,mape` rows of one run.
fn write_run_metrics(path: &Path, label: &str, seed: u64, rows: &[(&str, Metrics)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "seed", "predictor", "rmse", "mae", "mape"])?;
    for (name, m) in rows {
        w.write_record([
            label.to_string(),
            seed.to_string(),
            name.to_string(),
            m.rmse.to_string(),
            m.mae.to_string(),
            fmt_opt(m.mape),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_run_metrics(path: &Path) -> Result<Vec<(String, u64, String, Metrics)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::Load { path: path.to_path_buf(), reason: format!("bad number '{}'", field(i)) })
        };
        let mape = if field(5) == UNDEFINED { None } else { Some(num(5)?) };
        let seed = field(1)
            .parse()
            .map_err(|_| Error::Load { path: path.to_path_buf(), reason: format!("bad seed '{}'", field(1)) })?;
        out.push((field(0).to_string(), seed, field(2).to_string(), Metrics { rmse: num(3)?, mae: num(4)?, mape }));
    }
    Ok(out)
}

fn read_column(path: &Path, col: usize) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(rec.get(col).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN));
    }
    Ok(out)
}

/// Everything one training run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub label: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub fit: FitReport,
    pub test: Metrics,
    pub baselines: Vec<(String, Metrics)>,
}

/// Train one configuration into `dir`: `config.txt`, `history.csv`,
/// `val.csv`, `run_metrics.csv` and `checkpoints/{best,last}.ckpt`.
pub fn train_run(cfg: &ExperimentConfig, label: &str, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let (raw, graph) = load_data(cfg)?;
    let data = PreparedData::from_raw(&raw, graph, cfg.data.split)?;
    let text = cfg.to_text();
    fs::write(dir.join("config.txt"), &text)?;
    let model = Model::new(&cfg.model_config(raw.d_in()), cfg.train.seed)?;
    let mut state = TrainState::new(model, &cfg.train);
    let opts = FitOptions {
        checkpoint_dir: Some(dir.join("checkpoints")),
        config_text: text,
    };
    let report = fit(&mut state, &data, &cfg.train, &opts)?;
    write_history(&dir.join("history.csv"), &report.history)?;
    write_val(&dir.join("val.csv"), &report.val_history)?;
    let test = test_metrics(&state.model, &data, &raw, cfg)?;
    let floor = cfg.eval.mape_floor * data.normalizer.std;
    let baselines: Vec<(String, Metrics)> =
        naive_baselines(&raw, data.splits.train.clone(), data.splits.test.clone(), cfg.train.p, cfg.train.k, floor)?
            .into_iter()
            .map(|(n, m)| (n.to_string(), m))
            .collect();
    let mut rows = vec![(MODEL_ROW, test)];
    rows.extend(baselines.iter().map(|(n, m)| (n.as_str(), *m)));
    write_run_metrics(&dir.join(RUN_METRICS), label, cfg.train.seed, &rows)?;
    log::info!("{label} seed {}: test {:?}", cfg.train.seed, test);
    Ok(RunOutcome {
        label: label.to_string(),
        seed: cfg.train.seed,
        dir: dir.to_path_buf(),
        fit: report,
        test,
        baselines,
    })
}

/// Test metrics of a checkpoint. The model is rebuilt from the
/// configuration stored inside it; `cfg` supplies the data.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Metrics> {
    if !checkpoint.exists() {
        return Err(Error::Checkpoint(format!("no checkpoint at {}", checkpoint.display())));
    }
    let ck = Checkpoint::read(checkpoint)?;
    let stored = ExperimentConfig::parse(&ck.config_text)?;
    let (raw, graph) = load_data(cfg)?;
    let data = PreparedData::with_normalizer(&raw, graph, cfg.data.split, ck.normalizer)?;
    let model = Model::new(&stored.model_config(raw.d_in()), ck.seed)?;
    let mut state = TrainState::new(model, &stored.train);
    ck.restore(&mut state)?;
    let eval_cfg = ExperimentConfig {
        train: stored.train.clone(),
        eval: cfg.eval.clone(),
        ..cfg.clone()
    };
    test_metrics(&state.model, &data, &raw, &eval_cfg)
}

/// `evaluate` command: score a checkpoint and write `evaluation.csv` in `out`.
pub fn evaluate(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<Metrics> {
    let m = evaluate_checkpoint(cfg, checkpoint)?;
    fs::create_dir_all(out)?;
    let ck = Checkpoint::read(checkpoint)?;
    let stored = ExperimentConfig::parse(&ck.config_text)?;
    write_run_metrics(&out.join(EVALUATION), stored.train.variant.name(), ck.seed, &[(MODEL_ROW, m)])?;
    Ok(m)
}

/// `train` command: one run written straight into `out`, plus its report.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let label = cfg.train.variant.name();
    let run = train_run(cfg, label, out)?;
    let report = MetricReport::aggregate(label, &config_hash(&cfg.to_text()), vec![(run.seed, run.test)])?;
    let curves = vec![curves_of(out)?];
    write_report(out, &[report], &curves, &run.baselines)?;
    Ok(run)
}

/// One training job of a multi-run experiment.
#[derive(Clone, Debug)]
pub struct Job {
    pub label: String,
    pub cfg: ExperimentConfig,
}

fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join("runs").join(label).join(format!("seed_{seed}"))
}

/// Each job under `eval.seeds` consecutive seeds, in parallel, each in its
/// own run directory; then the serial aggregation pass.
pub fn run_jobs(jobs: &[Job], out: &Path) -> Result<Summary> {
    fs::create_dir_all(out)?;
    let mut labels = String::new();
    let mut work = Vec::new();
    for job in jobs {
        if job.label.is_empty() || job.label.contains(['/', '\\', '\n']) {
            return Err(Error::Config(format!("label '{}' cannot name a directory", job.label)));
        }
        job.cfg.validate()?;
        writeln!(labels, "{}", job.label).expect("string write");
        for i in 0..job.cfg.eval.seeds as u64 {
            let mut cfg = job.cfg.clone();
            cfg.train.seed = job.cfg.train.seed + i;
            work.push((job.label.clone(), cfg));
        }
    }
    fs::write(out.join("labels.txt"), labels)?;
    work.par_iter()
        .map(|(label, cfg)| train_run(cfg, label, &run_dir(out, label, cfg.train.seed)).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;
    report(out)
}

/// `ablate` command: the full model and every single-component variant.
pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let jobs: Vec<Job> = Variant::ALL
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.train.variant = v;
            Job { label: v.name().to_string(), cfg: c }
        })
        .collect();
    run_jobs(&jobs, out)
}

/// Values from `a..b` (step 1 for integers, 0.1 otherwise), `a..b:step`, or
/// a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<String>> {
    let bad = || Error::Config(format!("cannot read value grid '{text}'"));
    if let Some((a, rest)) = text.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (b, Some(s)),
            None => (rest, None),
        };
        let integral = !a.contains('.') && !b.contains('.') && step.is_none_or(|s| !s.contains('.'));
        let lo: f64 = a.trim().parse().map_err(|_| bad())?;
        let hi: f64 = b.trim().parse().map_err(|_| bad())?;
        let step: f64 = match step {
            Some(s) => s.trim().parse().map_err(|_| bad())?,
            None if integral => 1.0,
            None => 0.1,
        };
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| {
                let v = lo + step * i as f64;
                if integral {
                    format!("{}", v.round() as i64)
                } else {
                    format!("{}", (v * 1e10).round() / 1e10)
                }
            })
            .collect())
    } else {
        let vals: Vec<String> = text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if vals.is_empty() {
            return Err(bad());
        }
        Ok(vals)
    }
}

/// `sweep` command: one job per value of `param`.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String], out: &Path) -> Result<Summary> {
    let key = resolve_alias(param);
    let jobs = values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.set(key, v)?;
            Ok(Job { label: format!("{key}={v}"), cfg: c })
        })
        .collect::<Result<Vec<_>>>()?;
    run_jobs(&jobs, out)
}

/// Per-epoch mean training objective and validation loss of a run directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curves {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

fn curves_of(dir: &Path) -> Result<Curves> {
    let epochs = read_column(&dir.join("history.csv"), 1)?;
    let totals = read_column(&dir.join("history.csv"), 6)?;
    let mut train: Vec<(f64, usize)> = Vec::new();
    for (e, t) in epochs.iter().zip(&totals) {
        let e = *e as usize;
        if train.len() <= e {
            train.resize(e + 1, (0.0, 0));
        }
        train[e].0 += t;
        train[e].1 += 1;
    }
    Ok(Curves {
        train: train.iter().map(|(s, n)| s / (*n).max(1) as f64).collect(),
        val: read_column(&dir.join("val.csv"), 1)?,
    })
}

fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let xs: Vec<f64> = curves.iter().filter_map(|c| c.get(i).copied()).collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        })
        .collect()
}

/// Result of an aggregation pass.
#[derive(Clone, Debug)]
pub struct Summary {
    pub reports: Vec<MetricReport>,
    /// Reference predictors scored on the first run's test range.
    pub baselines: Vec<(String, Metrics)>,
    /// `full` beats or ties `sts_cm_only` on mean test MAE, when both ran.
    pub ordering_holds: Option<bool>,
}

/// `report` command: aggregate every run under `out/runs` and write
/// `metrics.csv`, `seeds.csv`, `report.md` and `curves.png`.
pub fn report(out: &Path) -> Result<Summary> {
    let runs_root = out.join("runs");
    let labels: Vec<String> = match fs::read_to_string(out.join("labels.txt")) {
        Ok(s) => s.lines().filter(|l| !l.is_empty()).map(str::to_string).collect(),
        Err(_) => {
            let mut v: Vec<String> = fs::read_dir(&runs_root)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            v.sort();
            v
        }
    };
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    let mut baselines: Vec<(String, Metrics)> = Vec::new();
    for label in &labels {
        let mut seeds: Vec<(u64, PathBuf)> = fs::read_dir(runs_root.join(label))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_prefix("seed_").and_then(|s| s.parse().ok()).map(|s| (s, e.path()))
            })
            .collect();
        seeds.sort();
        if seeds.is_empty() {
            return Err(Error::Config(format!("no runs recorded for '{label}'")));
        }
        let mut rows = Vec::new();
        let mut trains = Vec::new();
        let mut vals = Vec::new();
        let mut hash = String::new();
        for (seed, dir) in &seeds {
            let first_run = reports.is_empty() && *seed == seeds[0].0;
            for (_, s, predictor, m) in read_run_metrics(&dir.join(RUN_METRICS))? {
                if predictor == MODEL_ROW {
                    rows.push((s, m));
                } else if first_run {
                    baselines.push((predictor, m));
                }
            }
            let mut cfg_text = fs::read_to_string(dir.join("config.txt"))?;
            // the per-run seed is not part of the configuration identity
            if let Ok(mut c) = ExperimentConfig::parse(&cfg_text) {
                c.train.seed = seeds[0].0;
                cfg_text = c.to_text();
            }
            hash = config_hash(&cfg_text);
            let c = curves_of(dir)?;
            trains.push(c.train);
            vals.push(c.val);
        }
        reports.push(MetricReport::aggregate(label, &hash, rows)?);
        curves.push(Curves {
            train: mean_curve(&trains),
            val: mean_curve(&vals),
        });
    }
    let ordering_holds = write_report(out, &reports, &curves, &baselines)?;
    Ok(Summary {
        reports,
        baselines,
        ordering_holds,
    })
}

fn full_vs_prediction_only(reports: &[MetricReport]) -> Option<bool> {
    let find = |v: Variant| reports.iter().find(|r| r.label == v.name()).map(|r| r.mae.mean);
    Some(find(Variant::Full)? <= find(Variant::StsCmOnly)?)
}

fn cell(s: Option<MetricSummary>) -> String {
    s.map_or_else(|| UNDEFINED.to_string(), |s| s.to_string())
}

/// Markdown table, aggregated and per-seed CSVs, and the curve plot.
pub fn write_report(
    out: &Path,
    reports: &[MetricReport],
    curves: &[Curves],
    baselines: &[(String, Metrics)],
) -> Result<Option<bool>> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record([
        "label", "n_seeds", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "mape_mean", "mape_std", "config_hash",
    ])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in reports {
        w.write_record([
            r.label.clone(),
            r.n_seeds().to_string(),
            r.rmse.mean.to_string(),
            opt(r.rmse.std),
            r.mae.mean.to_string(),
            opt(r.mae.std),
            r.mape.map_or_else(|| UNDEFINED.to_string(), |m| m.mean.to_string()),
            opt(r.mape.and_then(|m| m.std)),
            r.config_hash.clone(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("seeds.csv"))?;
    w.write_record(["label", "seed", "rmse", "mae", "mape"])?;
    for r in reports {
        for (seed, m) in &r.runs {
            w.write_record([r.label.clone(), seed.to_string(), m.rmse.to_string(), m.mae.to_string(), fmt_opt(m.mape)])?;
        }
    }
    w.flush()?;

    let ordering = full_vs_prediction_only(reports);
    let mut md = String::new();
    md.push_str("| variant | RMSE±std | MAE±std | MAPE±std |\n|---|---|---|---|\n");
    for r in reports {
        writeln!(md, "| {} | {} | {} | {} |", r.label, r.rmse, r.mae, cell(r.mape)).expect("string write");
    }
    if !baselines.is_empty() {
        md.push_str("\n| baseline | RMSE | MAE | MAPE |\n|---|---|---|---|\n");
        for (name, m) in baselines {
            let mape = m.mape.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.4}"));
            writeln!(md, "| {name} | {:.4} | {:.4} | {mape} |", m.rmse, m.mae).expect("string write");
        }
    }
    writeln!(md, "\nRuns per row: {}. MAPE is in percent.", reports.iter().map(|r| r.n_seeds()).max().unwrap_or(0))
        .expect("string write");
    match ordering {
        Some(true) => md.push_str("\nCheck: full MAE <= sts_cm_only MAE holds.\n"),
        Some(false) => {
            md.push_str("\nWARNING: full MAE > sts_cm_only MAE; the expected ordering does not hold on this run.\n");
            log::warn!("full variant did not beat sts_cm_only on mean test MAE");
        }
        None => {}
    }
    md.push_str("\nColor order in curves.png (left: training objective per epoch, right: validation loss):\n");
    for (i, r) in reports.iter().enumerate() {
        let c = super::plot::color(i);
        writeln!(md, "- {}: #{:02x}{:02x}{:02x}", r.label, c[0], c[1], c[2]).expect("string write");
    }
    fs::write(out.join("report.md"), md)?;

    let train = Panel { curves: curves.iter().map(|c| c.train.clone()).collect() };
    let val = Panel { curves: curves.iter().map(|c| c.val.clone()).collect() };
    write_png(&[train, val], &out.join("curves.png"))?;
    Ok(ordering)
}
