//! Joint optimization of forecasting and contrastive objectives.

mod checkpoint;
mod config;
mod fit;
mod step;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use config::{ContrastiveConfig, ModelConfig, TrainConfig, Variant};
pub use fit::{fit, validation_loss, FitOptions, FitReport, PreparedData};
pub use step::{loss_and_grads, mse, predict, prediction_loss, train_step, LossBundle, Model, StepOutput, TrainState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use crate::contrastive::FilterBank;
    use crate::encoder_decoder::EncoderConfig;
    use crate::graph_data::{make_windows, synth_traffic, GraphSpec, WindowBatch};
    use crate::tensor::Tensor;

    pub(crate) fn tiny_model_config() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                p: 4,
                k: 2,
                d_model: 8,
                n_heads: 2,
                n_blocks: 1,
                n_decoder_blocks: 1,
                graph_hidden: 8,
                ..EncoderConfig::default()
            },
            cl: ContrastiveConfig {
                d_proj: 4,
                ..ContrastiveConfig::default()
            },
            ..ModelConfig::default()
        }
    }

    fn tiny_train(variant: Variant, epsilon: f64) -> TrainConfig {
        TrainConfig {
            p: 4,
            k: 2,
            batch_size: 8,
            learning_rate: 3e-3,
            epsilon,
            variant,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn data() -> (WindowBatch, GraphSpec) {
        let (series, graph) = synth_traffic(6, 8, 120, 3).unwrap();
        let series = series.map_values(|x| x / 50.0);
        let batch = make_windows(&series, 0..series.len(), 4, 2, 8, 0).unwrap().next().unwrap();
        (batch, graph)
    }

    fn bank(cfg: &ModelConfig, v: Variant) -> FilterBank {
        FilterBank::new(cfg.cl.top_u, cfg.cl.filter, v.filters_negatives())
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::new(vec![3], vec![1.0, 2.0, 5.0]).unwrap();
        assert!((mse(&a, &b).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!(mse(&a, &Tensor::zeros(&[2])).is_err());
        let mut g = Graph::new();
        let (x, y) = (g.constant(a), g.constant(b));
        let l = prediction_loss(&mut g, x, y).unwrap();
        assert!((g.value(l).item() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn total_is_weighted_sum_of_parts() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let model = Model::new(&mc, 1).unwrap();
        for v in Variant::ALL {
            let tc = tiny_train(v, 0.3);
            let out = loss_and_grads(&model, &mut bank(&mc, v), &batch, &graph, &tc, 0).unwrap();
            let b = out.bundle;
            let expected = b.l_pred + 0.3 * (b.l_sts_b + b.l_sts_s + b.l_sc);
            assert!((b.total - expected).abs() < 1e-9 * expected.abs().max(1.0), "{v}: {b:?}");
            if !v.uses_contrast() {
                assert_eq!((b.l_sts_b, b.l_sts_s, b.l_sc), (0.0, 0.0, 0.0));
            }
            if !v.uses_semantic_loss() {
                assert_eq!(b.l_sc, 0.0);
            } else {
                assert!(b.l_sc > 0.0);
            }
        }
    }

    #[test]
    fn zero_weight_leaves_contrastive_parameters_untouched() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let model = Model::new(&mc, 2).unwrap();
        let tc = tiny_train(Variant::Full, 0.0);
        let out = loss_and_grads(&model, &mut bank(&mc, Variant::Full), &batch, &graph, &tc, 0).unwrap();
        assert_eq!(out.bundle.total, out.bundle.l_pred);
        assert!(out.bundle.l_sts_b > 0.0);
        let mut touched = 0;
        for (id, name, _) in model.store.iter() {
            let g = &out.grads[id.index()];
            if Model::contrastive_param_prefixes().iter().any(|p| name.starts_with(p)) {
                assert!(g.data().iter().all(|&x| x == 0.0), "{name}");
            } else if g.data().iter().any(|&x| x != 0.0) {
                touched += 1;
            }
        }
        assert!(touched > 0);
    }

    #[test]
    fn steps_are_deterministic() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let tc = tiny_train(Variant::Full, 0.5);
        let run = || {
            let mut s = TrainState::new(Model::new(&mc, 4).unwrap(), &tc);
            let losses: Vec<f64> = (0..3).map(|_| train_step(&mut s, &batch, &graph, &tc).unwrap().total).collect();
            (losses, s.model.store)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradient_step_decreases_objective() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let model = Model::new(&mc, 5).unwrap();
        let tc = tiny_train(Variant::Full, 0.5);
        let out = loss_and_grads(&model, &mut bank(&mc, Variant::Full), &batch, &graph, &tc, 7).unwrap();
        let mut moved = model.clone();
        for id in model.store.ids() {
            let g = &out.grads[id.index()];
            let t = moved.store.get_mut(id);
            for (p, d) in t.data_mut().iter_mut().zip(g.data()) {
                *p -= 1e-6 * d;
            }
        }
        let after = loss_and_grads(&moved, &mut bank(&mc, Variant::Full), &batch, &graph, &tc, 7).unwrap();
        assert!(after.bundle.total < out.bundle.total);
    }

    #[test]
    fn prediction_loss_falls_within_fifty_steps() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let tc = tiny_train(Variant::Full, 0.5);
        let mut s = TrainState::new(Model::new(&mc, 6).unwrap(), &tc);
        let losses: Vec<f64> = (0..50).map(|_| train_step(&mut s, &batch, &graph, &tc).unwrap().l_pred).collect();
        let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = losses[45..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn mismatched_batch_is_rejected() {
        let (batch, graph) = data();
        let mut mc = tiny_model_config();
        mc.encoder.p = 5;
        let model = Model::new(&mc, 1).unwrap();
        let tc = TrainConfig { p: 5, ..tiny_train(Variant::Full, 0.5) };
        assert!(loss_and_grads(&model, &mut bank(&mc, Variant::Full), &batch, &graph, &tc, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (batch, graph) = data();
        let mc = tiny_model_config();
        let tc = tiny_train(Variant::Full, 0.5);
        let mut s = TrainState::new(Model::new(&mc, 8).unwrap(), &tc);
        for _ in 0..2 {
            train_step(&mut s, &batch, &graph, &tc).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let norm = crate::graph_data::Normalizer { mean: 3.0, std: 2.0 };
        let ck = Checkpoint::capture(&s, tc.seed, norm, "train.seed = 11\n");
        ck.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back, ck);

        let mut fresh = TrainState::new(Model::new(&mc, 99).unwrap(), &tc);
        back.restore(&mut fresh).unwrap();
        assert_eq!(fresh.model.store, s.model.store);
        assert_eq!(fresh.optimizer, s.optimizer);
        assert_eq!(fresh.step, 2);
        let a = train_step(&mut s, &batch, &graph, &tc).unwrap();
        let b = train_step(&mut fresh, &batch, &graph, &tc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_rejects_tampered_config() {
        let mc = tiny_model_config();
        let tc = tiny_train(Variant::Full, 0.5);
        let s = TrainState::new(Model::new(&mc, 8).unwrap(), &tc);
        let mut f = Checkpoint::capture(&s, 0, crate::graph_data::Normalizer::identity(), "a = 1").to_file();
        f.insert_text("config", "a = 2");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        f.write(&path).unwrap();
        assert!(Checkpoint::read(&path).is_err());
    }

    #[test]
    fn fit_tracks_best_epoch() {
        let (series, graph) = synth_traffic(5, 8, 240, 9).unwrap();
        let data = PreparedData::from_raw(&series, graph, [0.6, 0.2, 0.2]).unwrap();
        let mc = tiny_model_config();
        let tc = TrainConfig { epochs: 3, patience: 0, ..tiny_train(Variant::Full, 0.5) };
        let mut s = TrainState::new(Model::new(&mc, 1).unwrap(), &tc);
        let dir = tempfile::tempdir().unwrap();
        let opts = FitOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            config_text: "x = 1".into(),
        };
        let r = fit(&mut s, &data, &tc, &opts).unwrap();
        let per_epoch = crate::graph_data::make_windows(&data.series, data.splits.train.clone(), 4, 2, 8, 0)
            .unwrap()
            .num_batches();
        assert_eq!(r.history.len(), 3 * per_epoch);
        assert_eq!(r.val_history.len(), 3);
        assert!(r.history.iter().enumerate().all(|(i, b)| b.step == i as u64 && b.epoch == i / per_epoch));
        assert_eq!(r.val_history[r.best_epoch], r.best_val);
        assert!(r.val_history.iter().all(|&v| v >= r.best_val));
        assert_eq!(s.model.store, r.best_params);
        assert!((validation_loss(&s.model, &data, &tc).unwrap() - r.best_val).abs() < 1e-12);
        assert!(dir.path().join("best.ckpt").exists());
        assert!(dir.path().join("last.ckpt").exists());
    }
}
