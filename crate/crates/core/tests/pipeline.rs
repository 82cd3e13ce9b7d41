//! End-to-end behaviour of training, checkpoints and the experiment drivers
//! on small synthetic data.

use std::fs;
use std::path::Path;

use stsccl_core::contrastive::{FilterBank, NegativeFilter, NeighborSource};
use stsccl_core::experiments::{self, ExperimentConfig};
use stsccl_core::graph_data::{make_windows, synth_with, GraphSpec, SynthOptions, WindowBatch};
use stsccl_core::training::{
    fit, loss_and_grads, train_step, validation_loss, Checkpoint, FitOptions, Model, PreparedData, TrainConfig,
    TrainState, Variant,
};

const TINY: &str = "
data.nodes = 5
data.days = 8
data.interval = 120
model.d_model = 8
model.n_heads = 2
model.n_blocks = 1
model.n_decoder_blocks = 1
model.graph_hidden = 8
aug.generator_hidden_dim = 8
cl.d_proj = 4
train.p = 4
train.k = 2
train.batch_size = 8
train.epochs = 1
train.lr = 0.003
eval.seeds = 1
";

fn tiny() -> ExperimentConfig {
    ExperimentConfig::parse(TINY).unwrap()
}

fn prepared(cfg: &ExperimentConfig) -> PreparedData {
    let (raw, graph) = experiments::load_data(cfg).unwrap();
    PreparedData::from_raw(&raw, graph, cfg.data.split).unwrap()
}

fn state(cfg: &ExperimentConfig) -> TrainState {
    let model = Model::new(&cfg.model_config(1), cfg.train.seed).unwrap();
    TrainState::new(model, &cfg.train)
}

#[test]
fn validation_improves_over_five_epochs_on_twelve_nodes() {
    let mut cfg = tiny();
    cfg.set("data.nodes", "12").unwrap();
    cfg.set("train.epochs", "5").unwrap();
    cfg.set("train.patience", "0").unwrap();
    let data = prepared(&cfg);
    let mut st = state(&cfg);
    let report = fit(&mut st, &data, &cfg.train, &FitOptions::default()).unwrap();
    assert_eq!(report.val_history.len(), 5);
    let improving = (1..5)
        .filter(|&e| report.val_history[e] < report.val_history[..e].iter().copied().fold(f64::INFINITY, f64::min))
        .count();
    assert!(improving >= 1, "{:?}", report.val_history);
    assert!(report.best_val < report.val_history[0]);
}

/// Every augmentation at its identity and no contrastive weight leaves a
/// plain forecaster, which should overfit a small noise-free set quickly.
#[test]
fn plain_forecaster_overfits_a_small_set() {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("data.nodes", "4"),
        ("data.days", "8"),
        ("data.interval", "60"),
        ("data.noise_std", "0"),
        ("data.split", "0.9,0.05,0.05"),
        ("aug.mask_rate", "0"),
        ("aug.temporal_fusion", "false"),
        ("train.epsilon", "0"),
        ("train.lr", "0.003"),
        ("train.weight_decay", "0"),
        ("model.d_model", "32"),
        ("model.n_blocks", "1"),
        ("model.n_decoder_blocks", "1"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let data = prepared(&cfg);
    assert!(data.series.len() <= 200);
    let t = &cfg.train;
    let mut st = state(&cfg);
    let mut best = f64::INFINITY;
    let mut steps = 0;
    'outer: for epoch in 0.. {
        for batch in make_windows(&data.series, data.splits.train.clone(), t.p, t.k, t.batch_size, epoch).unwrap() {
            best = best.min(train_step(&mut st, &batch, &data.graph, t).unwrap().l_pred);
            steps += 1;
            if best < 1e-3 || steps == 500 {
                break 'outer;
            }
        }
    }
    assert!(best < 1e-3, "prediction loss only reached {best} after {steps} steps");
}

#[test]
fn checkpoint_reload_reproduces_validation_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.set("train.epochs", "2").unwrap();
    let data = prepared(&cfg);
    let mut st = state(&cfg);
    let opts = FitOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        config_text: cfg.to_text(),
    };
    let report = fit(&mut st, &data, &cfg.train, &opts).unwrap();
    let ck = Checkpoint::read(&dir.path().join("best.ckpt")).unwrap();
    let mut fresh = state(&cfg);
    ck.restore(&mut fresh).unwrap();
    let v = validation_loss(&fresh.model, &data, &cfg.train).unwrap();
    assert!((v - report.best_val).abs() <= 1e-9, "{v} vs {}", report.best_val);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(str::to_string).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()));
    rows
}

#[test]
fn sweep_reports_every_grid_value_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.set("eval.seeds", "2").unwrap();
    let grid = experiments::parse_grid("0.1..1.0").unwrap();
    let summary = experiments::sweep(&cfg, "epsilon", &grid, dir.path()).unwrap();
    assert_eq!(summary.reports.len(), 10);
    assert_eq!(summary.reports[0].label, "train.epsilon=0.1");

    let metrics = csv_rows(&dir.path().join("metrics.csv"));
    assert_eq!(
        metrics[0],
        ["label", "n_seeds", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "mape_mean", "mape_std", "config_hash"]
    );
    assert_eq!(metrics.len(), 11);
    let seeds = csv_rows(&dir.path().join("seeds.csv"));
    assert_eq!(seeds[0], ["label", "seed", "rmse", "mae", "mape"]);
    for row in &metrics[1..] {
        let label = &row[0];
        let n: usize = row[1].parse().unwrap();
        assert_eq!(n, 2);
        let per: Vec<&Vec<String>> = seeds[1..].iter().filter(|s| &s[0] == label).collect();
        assert_eq!(per.len(), n);
        for (col, mean_col) in [(2, 2), (3, 4)] {
            let xs: Vec<f64> = per.iter().map(|s| s[col].parse().unwrap()).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
            let m: f64 = row[mean_col].parse().unwrap();
            let s: f64 = row[mean_col + 1].parse().unwrap();
            assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{label} mean");
            assert!((s - std).abs() <= 1e-12 * std.abs().max(1.0), "{label} std");
        }
        assert_eq!(row[8].len(), 64);
    }
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| variant | RMSE±std | MAE±std | MAPE±std |"));
    assert!(md.contains("| train.epsilon=0.5 |"));
    assert!(md.contains("| persistence |"));

    let again = experiments::report(dir.path()).unwrap();
    assert_eq!(again.reports, summary.reports);
}

#[test]
fn train_then_evaluate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let run = experiments::train(&cfg, dir.path()).unwrap();
    for f in ["config.txt", "history.csv", "val.csv", "run_metrics.csv", "metrics.csv", "report.md", "curves.png"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let ckpt = dir.path().join("checkpoints").join("best.ckpt");
    let e1 = dir.path().join("eval1");
    let e2 = dir.path().join("eval2");
    let m1 = experiments::evaluate(&cfg, &ckpt, &e1).unwrap();
    let m2 = experiments::evaluate(&cfg, &ckpt, &e2).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(m1, run.test);
    assert_eq!(
        fs::read(e1.join(experiments::EVALUATION)).unwrap(),
        fs::read(e2.join(experiments::EVALUATION)).unwrap()
    );
}

#[test]
fn history_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.set("train.epochs", "2").unwrap();
    cfg.set("train.patience", "0").unwrap();
    let run = experiments::train_run(&cfg, "full", dir.path()).unwrap();
    let data = prepared(&cfg);
    let per_epoch = make_windows(&data.series, data.splits.train.clone(), 4, 2, 8, 0).unwrap().num_batches();
    assert_eq!(run.fit.history.len(), 2 * per_epoch);
    let rows = csv_rows(&dir.path().join("history.csv"));
    assert_eq!(rows[0], ["step", "epoch", "l_pred", "l_sts_b", "l_sts_s", "l_sc", "total"]);
    assert_eq!(rows.len() - 1, run.fit.history.len());
}

fn variant_setup() -> (Model, WindowBatch, GraphSpec) {
    let cfg = tiny();
    let (raw, graph) = synth_with(&SynthOptions {
        n_nodes: 5,
        days: 8,
        interval_minutes: 120,
        ..SynthOptions::default()
    })
    .unwrap();
    let raw = raw.map_values(|x| x / 50.0);
    let batch = make_windows(&raw, 0..raw.len(), 4, 2, 6, 1).unwrap().next().unwrap();
    (Model::new(&cfg.model_config(1), 4).unwrap(), batch, graph)
}

fn train_cfg(variant: Variant) -> TrainConfig {
    TrainConfig {
        p: 4,
        k: 2,
        variant,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn grad_norm(model: &Model, grads: &[stsccl_core::Tensor], prefix: &str) -> f64 {
    model
        .store
        .iter()
        .filter(|(_, name, _)| name.starts_with(prefix))
        .map(|(id, _, _)| grads[id.index()].data().iter().map(|v| v * v).sum::<f64>())
        .sum()
}

#[test]
fn prediction_only_variant_has_no_contrastive_terms() {
    let (model, batch, graph) = variant_setup();
    let cfg = train_cfg(Variant::StsCmOnly);
    let mut bank = FilterBank::new(2, NeighborSource::Connectivity, true);
    let out = loss_and_grads(&model, &mut bank, &batch, &graph, &cfg, 0).unwrap();
    let b = out.bundle;
    assert_eq!((b.l_sts_b, b.l_sts_s, b.l_sc), (0.0, 0.0, 0.0));
    assert_eq!(b.total, b.l_pred);
    assert_eq!(grad_norm(&model, &out.grads, "contrast."), 0.0);
    assert_eq!(grad_norm(&model, &out.grads, "generator."), 0.0);
}

#[test]
fn mutual_view_variant_drops_only_the_semantic_loss() {
    let (model, batch, graph) = variant_setup();
    let cfg = train_cfg(Variant::StsCmMvp);
    let mut bank = FilterBank::new(2, NeighborSource::Connectivity, true);
    let b = loss_and_grads(&model, &mut bank, &batch, &graph, &cfg, 0).unwrap().bundle;
    assert_eq!(b.l_sc, 0.0);
    assert!(b.l_sts_b > 0.0 && b.l_sts_s > 0.0);
}

#[test]
fn unfiltered_variant_uses_every_other_node() {
    let (model, batch, graph) = variant_setup();
    let st = TrainState::new(model, &train_cfg(Variant::NoNegFilter));
    let mut bank = st.filters.clone();
    let f = bank.get(&graph, &batch.anchor_calendar[0]).unwrap();
    assert_eq!(f, &NegativeFilter::unfiltered(graph.n_nodes));
    let filtered = TrainState::new(st.model.clone(), &train_cfg(Variant::Full));
    let mut bank = filtered.filters.clone();
    assert_ne!(bank.get(&graph, &batch.anchor_calendar[0]).unwrap(), &NegativeFilter::unfiltered(graph.n_nodes));
}

#[test]
fn static_graph_variant_bypasses_the_adjacency_generator() {
    let (model, batch, graph) = variant_setup();
    let mut bank = FilterBank::new(2, NeighborSource::Connectivity, true);
    let stat = loss_and_grads(&model, &mut bank, &batch, &graph, &train_cfg(Variant::NoDiGcn), 0).unwrap();
    let full = loss_and_grads(&model, &mut bank, &batch, &graph, &train_cfg(Variant::Full), 0).unwrap();
    let prefix = "encoder.block0.graph.";
    assert_eq!(grad_norm(&model, &stat.grads, prefix), 0.0);
    assert!(grad_norm(&model, &full.grads, prefix) > 0.0);
}

#[test]
fn single_view_variants_still_contrast_two_views() {
    let (model, batch, graph) = variant_setup();
    let mut bank = FilterBank::new(2, NeighborSource::Connectivity, true);
    for v in [Variant::BaOnly, Variant::SaOnly] {
        let out = loss_and_grads(&model, &mut bank, &batch, &graph, &train_cfg(v), 0).unwrap();
        assert!(out.bundle.l_sts_b > 0.0 && out.bundle.l_sc > 0.0, "{v}");
        let gen = grad_norm(&model, &out.grads, "generator.");
        if v == Variant::BaOnly {
            assert_eq!(gen, 0.0);
        } else {
            assert!(gen > 0.0);
        }
    }
}
