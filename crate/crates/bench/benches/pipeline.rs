use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use metafp_bench::Fixture;
use metafp_core::auth::{authenticate_p1, AuthConfig, AuthServer, EnrollOptions};
use metafp_core::classifier::{dataset_inputs, FeatureConfig, Mode, NetworkConfig, NetworkParams, Targets};
use metafp_core::harness::{dataset_from_bytes, dataset_to_bytes};
use metafp_core::phy::{subcarrier_grid, Transmitter};

fn surface(c: &mut Criterion) {
    let f = Fixture::new(12);
    let grid = subcarrier_grid(6, 30).unwrap();
    c.bench_function("surface_response_30", |b| b.iter(|| f.surface.response(black_box(&f.codes[3]), &grid).unwrap()));
    let tx = Transmitter::new(&f.surface, &f.scenario, &f.seeds).unwrap();
    let mut rng = f.seeds.stream("bench/packets");
    c.bench_function("csi_packet", |b| b.iter(|| tx.packet(&f.codes[3], 6, &mut rng).unwrap()));
}

fn network(c: &mut Criterion) {
    let f = Fixture::new(12);
    let ds = f.dataset(3);
    let idx: Vec<usize> = (0..32).collect();
    let features = FeatureConfig::default();
    let x = dataset_inputs(&ds, &idx, &features).unwrap();
    let labels: Vec<usize> = idx.iter().map(|&i| ds.records[i].label as usize).collect();
    for (name, dense) in [("desk", vec![256, 128, 12]), ("reference", vec![2048, 1024, 12])] {
        let mut cfg = NetworkConfig::reference(12);
        cfg.dense_sizes = dense;
        let params = NetworkParams::init(&cfg, &mut f.seeds.stream("bench/init")).unwrap();
        c.bench_function(&format!("cnn_{name}_forward_32"), |b| b.iter(|| params.predict(x.view()).unwrap()));
        c.bench_function(&format!("cnn_{name}_gradient_32"), |b| {
            b.iter(|| params.loss_and_gradient(x.view(), Targets::Labels(&labels), Mode::Train { seed: 1 }).unwrap())
        });
    }
}

fn server(c: &mut Criterion) {
    let f = Fixture::new(12);
    let ds = f.dataset(60);
    let mut server = AuthServer::new(AuthConfig::default(), 1).unwrap();
    server.enroll("node", &ds, &EnrollOptions::default()).unwrap();
    let csi = ds.records[5].csi.clone();
    c.bench_function("authenticate_p1", |b| b.iter(|| authenticate_p1(&server, black_box(&csi), "node").unwrap()));
    c.bench_function("enroll_12x60", |b| {
        b.iter_batched(
            || AuthServer::new(AuthConfig::default(), 1).unwrap(),
            |mut s| s.enroll("node", &ds, &EnrollOptions::default()).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn io(c: &mut Criterion) {
    let ds = Fixture::new(12).dataset(100);
    let bytes = dataset_to_bytes(&ds).unwrap();
    c.bench_function("dataset_encode_1200", |b| b.iter(|| dataset_to_bytes(black_box(&ds)).unwrap()));
    c.bench_function("dataset_decode_1200", |b| b.iter(|| dataset_from_bytes(black_box(&bytes)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = surface, network, server, io
}
criterion_main!(benches);
