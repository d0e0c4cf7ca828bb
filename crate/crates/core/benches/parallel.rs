//! Sequential vs rayon execution of the data-parallel loops: batch
//! embedding, gallery-probe matching and scoring against every cluster.
//! On a single-core machine both modes should time about the same.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ecg_guard::discriminator::{DiscriminatorHead, HeadConfig};
use ecg_guard::ecgstore::ModelInput;
use ecg_guard::embedder::{EcgVector, Embedder, EmbedderConfig};
use ecg_guard::evalharness::gallery_probe;
use ecg_guard::identity::{LikelihoodStrategy, VectorDatabase};
use ecg_guard::synthgen::{generate_dataset, SynthConfig};
use ecg_guard::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<EcgVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| EcgVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()).collect()
}

fn bench_embed(c: &mut Criterion) {
    let ds = generate_dataset(
        &SynthConfig { n_patients: 8, min_recordings: 2, max_recordings: 2, ..Default::default() },
        Exec::Sequential,
    )
    .unwrap();
    let inputs: Vec<ModelInput> = ds.container.records().iter().map(|r| ModelInput::from_record(r).unwrap()).collect();
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_desk()).unwrap();
    let mut group = c.benchmark_group("embed_batch_16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.embed_batch(&inputs, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_gallery(c: &mut Criterion) {
    let vectors = random_vectors(400, 128, 1);
    let labels: Vec<u32> = (0..400).map(|i| i / 2).collect();
    let subset: Vec<usize> = (0..400).collect();
    let head: DiscriminatorHead<f64> =
        DiscriminatorHead::new(HeadConfig { embedding_dim: 128, ..Default::default() }).unwrap();
    let mut group = c.benchmark_group("gallery_probe_200");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| gallery_probe(&vectors, &labels, &subset, &head, 200, 3, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_score_all(c: &mut Criterion) {
    let vectors = random_vectors(2000, 128, 2);
    let mut db = VectorDatabase::new(128);
    for (i, chunk) in vectors.chunks(4).enumerate() {
        db.register_patient(i as u32, chunk.to_vec()).unwrap();
    }
    let probe = random_vectors(1, 128, 3).remove(0);
    let head: DiscriminatorHead<f64> =
        DiscriminatorHead::new(HeadConfig { embedding_dim: 128, ..Default::default() }).unwrap();
    let mut group = c.benchmark_group("score_all_500_clusters");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| db.score_all(&probe, &head, LikelihoodStrategy::WeightedDiscAvg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_embed, bench_gallery, bench_score_all);
criterion_main!(benches);
