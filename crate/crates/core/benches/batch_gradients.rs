//! Sequential against rayon-parallel batch gradients on the tiny model.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use poembert::corpus::generate_synthetic;
use poembert::preprocess::preprocess_verse;
use poembert::tokenizer::train_wordpiece;
use poembert::training::{apply_mlm_masking, encode_lines, mlm_gradients};
use poembert::{Exec, ModelConfig, ModelParams, TaskId, TrainConfig};

fn batch_gradients(c: &mut Criterion) {
    let lines: Vec<String> = generate_synthetic(64, 1, TaskId::Rhyme)
        .records
        .iter()
        .map(|r| preprocess_verse(r).unwrap().line)
        .collect();
    let vocab = train_wordpiece(&lines, 512, 2).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::tiny()
    };
    let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let train = TrainConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<_> = encode_lines(&lines, &vocab, cfg.max_len)
        .iter()
        .take(train.batch_size)
        .map(|s| apply_mlm_masking(s, &train, vocab.len(), &mut rng))
        .collect();

    let mut group = c.benchmark_group("mlm_gradients");
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        group.bench_function(BenchmarkId::new(name, batch.len()), |b| {
            b.iter(|| mlm_gradients(&params, &cfg, &batch, Some((7, 0)), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients);
criterion_main!(benches);
