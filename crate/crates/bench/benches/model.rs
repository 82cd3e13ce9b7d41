use criterion::{black_box, criterion_group, criterion_main, Criterion};
use stsccl_bench::{batch, configs};
use stsccl_core::augmentation::edge_mask;
use stsccl_core::contrastive::build_negative_filter;
use stsccl_core::encoder_decoder::{dense_attention, probsparse_attention};
use stsccl_core::params::init_normal;
use stsccl_core::rng;
use stsccl_core::training::{predict, train_step, Model, TrainState};
use stsccl_core::Graph;

fn training(c: &mut Criterion) {
    let (mc, tc) = configs();
    let (b, graph) = batch(12, 16);
    let mut state = TrainState::new(Model::new(&mc, 0).unwrap(), &tc);
    c.bench_function("train_step 12 nodes batch 16", |bench| {
        bench.iter(|| train_step(&mut state, &b, &graph, &tc).unwrap())
    });
    let model = Model::new(&mc, 0).unwrap();
    c.bench_function("predict 12 nodes batch 16", |bench| {
        bench.iter(|| predict(&model, black_box(&b.history), &graph, tc.variant).unwrap())
    });
}

fn attention(c: &mut Criterion) {
    let q = init_normal(&mut rng::rng(1), &[8, 96, 16], 1.0);
    let mut group = c.benchmark_group("attention length 96");
    group.bench_function("dense", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let x = g.constant(q.clone());
            dense_attention(&mut g, x, x, x, None)
        })
    });
    group.bench_function("probsparse", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let x = g.constant(q.clone());
            probsparse_attention(&mut g, x, x, x, 5.0, 3)
        })
    });
    group.finish();
}

fn graph_ops(c: &mut Criterion) {
    let (_, graph) = batch(40, 1);
    let nodes: Vec<usize> = (0..graph.n_nodes).collect();
    c.bench_function("negative filter 40 nodes", |bench| {
        bench.iter(|| build_negative_filter(&graph, &nodes, 3).unwrap())
    });
    c.bench_function("edge mask 40 nodes", |bench| bench.iter(|| edge_mask(&graph.a_con, 0.1, 5).unwrap()));
}

criterion_group!(benches, training, attention, graph_ops);
criterion_main!(benches);
