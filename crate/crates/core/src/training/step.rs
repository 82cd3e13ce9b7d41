use crate::augmentation::{
    apply_choices, attr_mask, basic_augment, strong_augment, AugmentationConfig, ViewGenerator, CHOICE_ATTR_MASK,
};
use crate::autograd::{Graph, Var};
use crate::contrastive::{semantic_contextual_loss, sts_loss, ContrastiveHeads, FilterBank, NegativeFilter};
use crate::encoder_decoder::{decoder_forward, sts_cm_forward, Decoder, EncodeOptions, Encoder};
use crate::error::{Error, Result};
use crate::graph_data::{GraphSpec, WindowBatch};
use crate::params::{clip_global_norm, AdamW, Bound, ParamStore};
use crate::rng::{self, stream};
use crate::tensor::Tensor;

use super::config::{ModelConfig, TrainConfig, Variant};

/// All trainable components sharing one parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub generator: ViewGenerator,
    pub heads: ContrastiveHeads,
}

impl Model {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut r = rng::rng(rng::derive(seed, &[stream::INIT]));
        let e = &cfg.encoder;
        let encoder = Encoder::new(&mut store, "encoder", e, &mut r)?;
        let decoder = Decoder::new(&mut store, "decoder", e, &mut r)?;
        let generator = ViewGenerator::new(&mut store, "generator", e.p, e.d_in, cfg.aug.generator_hidden_dim, &mut r);
        let heads = ContrastiveHeads::new(&mut store, "contrast", e.d_model, e.k, cfg.cl.d_proj, cfg.cl.delta, &mut r)?;
        Ok(Self {
            cfg: cfg.clone(),
            store,
            encoder,
            decoder,
            generator,
            heads,
        })
    }

    /// Names of the parameters that only the contrastive losses reach.
    pub fn contrastive_param_prefixes() -> [&'static str; 2] {
        ["contrast.", "generator."]
    }
}

/// Model, optimizer and step counter.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub optimizer: AdamW,
    pub step: u64,
    pub filters: FilterBank,
}

impl TrainState {
    pub fn new(model: Model, train: &TrainConfig) -> Self {
        let optimizer = AdamW::new(&model.store, train.learning_rate, train.weight_decay);
        let filters = FilterBank::new(model.cfg.cl.top_u, model.cfg.cl.filter, train.variant.filters_negatives());
        Self {
            model,
            optimizer,
            step: 0,
            filters,
        }
    }
}

/// Loss parts of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBundle {
    pub l_pred: f64,
    pub l_sts_b: f64,
    pub l_sts_s: f64,
    pub l_sc: f64,
    pub total: f64,
    pub epoch: usize,
    pub step: u64,
}

/// Mean squared error over all elements.
pub fn prediction_loss(g: &mut Graph, pred: Var, truth: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(truth) {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            g.shape(pred),
            g.shape(truth)
        )));
    }
    let d = g.sub(pred, truth);
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Plain-tensor counterpart of [`prediction_loss`].
pub fn mse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    let s: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / pred.len() as f64)
}

/// Forecast `[B, K, N, d_out]` from raw history with the connectivity graph.
pub fn predict(model: &Model, history: &Tensor, graph: &GraphSpec, variant: Variant) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = Bound::frozen(&mut g, &model.store);
    let x = g.constant(history.clone());
    let a = g.constant(graph.a_con.clone());
    let opts = EncodeOptions {
        static_graph: variant.static_graph(),
        ..EncodeOptions::eval()
    };
    let enc = sts_cm_forward(&mut g, &p, &model.encoder, x, a, graph, &opts)?;
    let y = decoder_forward(&mut g, &p, &model.decoder, &enc)?;
    Ok(g.value(y).clone())
}

#[derive(Clone, Copy, Debug)]
enum ViewKind {
    Basic,
    Strong,
}

struct BuiltView {
    x: Var,
    adjacency: Var,
    /// The future window transformed the same way, as encoding target input.
    future: Tensor,
}

fn build_view(
    g: &mut Graph,
    p: &Bound,
    model: &Model,
    kind: ViewKind,
    batch: &WindowBatch,
    graph: &GraphSpec,
    aug: &AugmentationConfig,
) -> Result<BuiltView> {
    match kind {
        ViewKind::Basic => {
            let (view, adj, _) = basic_augment(batch, graph, aug)?;
            let future = attr_mask(&batch.future, aug.attr_mask_rate, rng::derive(aug.seed, &[stream::FUTURE]))?;
            Ok(BuiltView {
                x: g.constant(view),
                adjacency: g.constant(adj),
                future,
            })
        }
        ViewKind::Strong => {
            let s = strong_augment(g, p, &model.generator, batch, graph, aug)?;
            let mut h = Graph::new();
            let f = h.constant(batch.future.clone());
            let c = h.constant(g.value(s.choices).clone());
            let masked = apply_choices(&mut h, f, c, CHOICE_ATTR_MASK);
            Ok(BuiltView {
                x: s.view,
                adjacency: s.adjacency,
                future: h.value(masked).clone(),
            })
        }
    }
}

/// Stop-gradient encoding of a view's future window: `[B, K, N, D]`.
fn encode_target(
    model: &Model,
    future: &Tensor,
    adjacency: &Tensor,
    graph: &GraphSpec,
    variant: Variant,
    seed: u64,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = Bound::frozen(&mut g, &model.store);
    let x = g.constant(future.clone());
    let a = g.constant(adjacency.clone());
    let opts = EncodeOptions {
        seed,
        stochastic: false,
        time_offset: model.cfg.encoder.p,
        static_graph: variant.static_graph(),
    };
    let out = sts_cm_forward(&mut g, &p, &model.encoder, x, a, graph, &opts)?;
    Ok(g.value(out.z_seq).clone())
}

/// Losses and parameter gradients of one step, without updating anything.
pub struct StepOutput {
    pub bundle: LossBundle,
    pub grads: Vec<Tensor>,
}

pub fn loss_and_grads(
    model: &Model,
    filters: &mut FilterBank,
    batch: &WindowBatch,
    graph: &GraphSpec,
    cfg: &TrainConfig,
    step: u64,
) -> Result<StepOutput> {
    let e = &model.cfg.encoder;
    if batch.p() != e.p || batch.k() != e.k || batch.d_in() != e.d_in || batch.n_nodes() != graph.n_nodes {
        return Err(Error::Shape(format!(
            "batch [B, {}, {}, {}] with horizon {} does not fit the model",
            batch.p(),
            batch.n_nodes(),
            batch.d_in(),
            batch.k()
        )));
    }
    let variant = cfg.variant;
    let step_seed = rng::derive(cfg.seed, &[stream::STEP, step]);
    let aug_first = model.cfg.aug.with_seed(step_seed);
    let aug_second = match variant {
        Variant::BaOnly | Variant::SaOnly => model.cfg.aug.with_seed(rng::derive(step_seed, &[stream::SECOND_VIEW])),
        _ => aug_first.clone(),
    };
    let (first_kind, second_kind) = match variant {
        Variant::BaOnly => (ViewKind::Basic, ViewKind::Basic),
        Variant::SaOnly => (ViewKind::Strong, ViewKind::Strong),
        _ => (ViewKind::Basic, ViewKind::Strong),
    };

    let mut g = Graph::new();
    let p = Bound::new(&mut g, &model.store);
    let enc_opts = |tag: u64| EncodeOptions {
        seed: rng::derive(step_seed, &[tag]),
        stochastic: true,
        time_offset: 0,
        static_graph: variant.static_graph(),
    };

    let first = build_view(&mut g, &p, model, first_kind, batch, graph, &aug_first)?;
    let enc_first = sts_cm_forward(&mut g, &p, &model.encoder, first.x, first.adjacency, graph, &enc_opts(stream::ENCODER_BASIC))?;
    let pred = decoder_forward(&mut g, &p, &model.decoder, &enc_first)?;
    let truth = g.constant(batch.future.clone());
    let l_pred = prediction_loss(&mut g, pred, truth)?;

    let mut parts = [0.0; 3];
    let mut objective = l_pred;
    if variant.uses_contrast() {
        let second = build_view(&mut g, &p, model, second_kind, batch, graph, &aug_second)?;
        let enc_second =
            sts_cm_forward(&mut g, &p, &model.encoder, second.x, second.adjacency, graph, &enc_opts(stream::ENCODER_STRONG))?;
        let target_seed = rng::derive(step_seed, &[stream::FUTURE]);
        let z_first = encode_target(model, &first.future, g.value(first.adjacency), graph, variant, target_seed)?;
        let z_second = encode_target(model, &second.future, g.value(second.adjacency), graph, variant, target_seed)?;
        let z_first = g.constant(z_first);
        let z_second = g.constant(z_second);
        let l_b = sts_loss(&mut g, &p, &model.heads, enc_first.c_vec, z_second)?;
        let l_s = sts_loss(&mut g, &p, &model.heads, enc_second.c_vec, z_first)?;
        let mut cl = g.add(l_b, l_s);
        parts[0] = g.value(l_b).item();
        parts[1] = g.value(l_s).item();
        if variant.uses_semantic_loss() {
            let owned: Vec<NegativeFilter> = batch
                .anchor_calendar
                .iter()
                .map(|day| filters.get(graph, day).cloned())
                .collect::<Result<_>>()?;
            let refs: Vec<&NegativeFilter> = owned.iter().collect();
            let h_first = model.heads.proj.forward(&mut g, &p, enc_first.c_vec);
            let h_second = model.heads.proj.forward(&mut g, &p, enc_second.c_vec);
            let l_sc = semantic_contextual_loss(&mut g, h_first, h_second, &refs, model.heads.delta)?;
            parts[2] = g.value(l_sc).item();
            cl = g.add(cl, l_sc);
        }
        if cfg.epsilon > 0.0 {
            let weighted = g.scale(cl, cfg.epsilon);
            objective = g.add(l_pred, weighted);
        }
    }
    let l_pred_v = g.value(l_pred).item();
    let total = g.value(objective).item();
    let bundle = LossBundle {
        l_pred: l_pred_v,
        l_sts_b: parts[0],
        l_sts_s: parts[1],
        l_sc: parts[2],
        total,
        epoch: 0,
        step,
    };
    if !total.is_finite() {
        return Err(Error::Numerical(format!("non-finite objective at step {step}: {bundle:?}")));
    }
    let grads = g.backward(objective);
    let grads = p.grads(&model.store, grads);
    Ok(StepOutput { bundle, grads })
}

/// One joint update of every parameter group.
pub fn train_step(state: &mut TrainState, batch: &WindowBatch, graph: &GraphSpec, cfg: &TrainConfig) -> Result<LossBundle> {
    let StepOutput { bundle, mut grads } =
        loss_and_grads(&state.model, &mut state.filters, batch, graph, cfg, state.step)?;
    clip_global_norm(&mut grads, cfg.clip_norm);
    state.optimizer.update(&mut state.model.store, &grads);
    state.step += 1;
    Ok(bundle)
}
