use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};
use mxm_core::dataset::load_manifest;
use mxm_core::model::{featurize, ModelConfig, MxmNet, Sample};
use mxm_core::par;

fn samples(net: &MxmNet) -> Vec<Sample> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/overfit/overfit.manifest");
    let ds = load_manifest(&path).expect("fixture manifest");
    ds.entries
        .iter()
        .map(|e| featurize(&e.molecule, net.config()).expect("featurize"))
        .collect()
}

fn gradients(c: &mut Criterion) {
    let net = MxmNet::new(ModelConfig::small(32, 2)).unwrap();
    let params = net.init_params(0).unwrap();
    let batch = samples(&net);
    let mut g = c.benchmark_group("batch_gradients");
    g.sample_size(20);
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(black_box(&batch), |s| net.gradients(&params, s).unwrap().0))
    });
    g.bench_function(
        if par::is_parallel() {
            "parallel"
        } else {
            "parallel_disabled"
        },
        |b| b.iter(|| par::map(black_box(&batch), |s| net.gradients(&params, s).unwrap().0)),
    );
    g.finish();
}

fn featurization(c: &mut Criterion) {
    let net = MxmNet::new(ModelConfig::default()).unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/overfit/overfit.manifest");
    let mols: Vec<_> = load_manifest(&path)
        .unwrap()
        .entries
        .into_iter()
        .map(|e| e.molecule)
        .collect();
    let mut g = c.benchmark_group("featurize");
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(black_box(&mols), |m| featurize(m, net.config()).unwrap()))
    });
    g.bench_function(
        if par::is_parallel() {
            "parallel"
        } else {
            "parallel_disabled"
        },
        |b| b.iter(|| par::map(black_box(&mols), |m| featurize(m, net.config()).unwrap())),
    );
    g.finish();
}

criterion_group!(benches, gradients, featurization);
criterion_main!(benches);
