use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use saam_core::tensor::GradStore;
use saam_core::text::{generate_synthetic_corpus, make_batch, SyntheticConfig};
use saam_core::training::{accumulate_gradients, LossWeights};
use saam_core::{
    Architecture, EncoderConfig, Model, ModelConfig, ReviewDocument, Variant, Vocabulary,
};

const DOCS: usize = 8;

fn corpus() -> (saam_core::AspectSet, Vocabulary, Vec<ReviewDocument>) {
    let cfg = SyntheticConfig {
        num_aspects: 4,
        num_docs: DOCS,
        sentences_per_aspect: 2,
        filler_sentences: 4,
        keywords_per_sentence: 6,
        overlap: 0.3,
        seed: 7,
        ..SyntheticConfig::default()
    };
    let corpus = generate_synthetic_corpus(&cfg).unwrap();
    let vocab = Vocabulary::from_texts(corpus.records.iter().flat_map(|r| r.sentence_texts()), 1);
    let docs = corpus
        .records
        .iter()
        .map(|r| ReviewDocument::from_record(r, &corpus.aspects, &vocab).unwrap())
        .collect();
    (corpus.aspects, vocab, docs)
}

fn encoders() -> [(&'static str, EncoderConfig); 3] {
    [
        ("mean", EncoderConfig::mean(32)),
        ("cnn", EncoderConfig::cnn(32, vec![3, 4, 5], 32)),
        ("gru", EncoderConfig::gru(32, 32)),
    ]
}

fn bench(c: &mut Criterion) {
    let (aspects, vocab, docs) = corpus();
    let refs: Vec<&ReviewDocument> = docs.iter().collect();
    let all: Vec<usize> = (0..docs.len()).collect();
    let mut group = c.benchmark_group("batch_of_8");
    for (enc_name, enc) in encoders() {
        for variant in [Variant::C1, Variant::C2, Variant::R, Variant::FlatR] {
            let mut arch = Architecture::new(variant, enc.clone());
            arch.s_max = 16;
            arch.t_max = 16;
            let batch = make_batch(&refs, arch.s_max, arch.t_max);
            let config = ModelConfig {
                architecture: arch,
                aspects: aspects.clone(),
                vocab_size: vocab.len(),
            };
            let model = Model::new(config, 0).unwrap();
            let id = format!("{enc_name}+{variant}");
            group.bench_with_input(BenchmarkId::new("forward", &id), &docs, |b, docs| {
                b.iter(|| {
                    for d in docs {
                        std::hint::black_box(model.predict(d).unwrap());
                    }
                })
            });
            let mut grads = GradStore::zeros_like(model.params());
            group.bench_function(BenchmarkId::new("forward_backward", &id), |b| {
                b.iter(|| {
                    grads.zero();
                    accumulate_gradients(
                        &model,
                        &batch,
                        &all,
                        LossWeights::default(),
                        &mut grads,
                        None,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
