use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saam_core::attribution::{extract_snippets, DocumentView, Polarity};
use saam_core::encoders::EncoderConfig;
use saam_core::evaluation::{cohen_kappa, mean_squared_error, r_squared};
use saam_core::heads::Prediction;
use saam_core::selftest::toy_model_config;
use saam_core::tensor::GradStore;
use saam_core::text::{make_batch, split_corpus, SplitConfig};
use saam_core::training::{
    classification_loss, loss_var, regression_loss, Checkpoint, LossWeights, Optimizer,
    OptimizerKind,
};
use saam_core::{
    AspectSet, AttributionResult, Graph, Model, ReviewDocument, Tensor, Variant, Vocabulary,
};

const VOCAB: u32 = 12;

fn encoder(k: usize) -> EncoderConfig {
    match k % 3 {
        0 => EncoderConfig::mean(8),
        1 => EncoderConfig::cnn(5, vec![2, 3], 4),
        _ => EncoderConfig::gru(5, 8),
    }
}

fn model(variant: Variant, enc: EncoderConfig, seed: u64) -> Model {
    Model::new(toy_model_config(variant, enc), seed).unwrap()
}

fn doc(sentences: Vec<Vec<u32>>, ratings: [u8; 3]) -> ReviewDocument {
    let n = sentences.len();
    ReviewDocument {
        doc_id: "p".into(),
        sentence_texts: (0..n).map(|i| format!("s{i}")).collect(),
        sentences,
        overall_rating: ratings[0] as f64,
        aspect_ratings: vec![ratings[1] as f64, ratings[2] as f64],
        sentence_labels: None,
    }
}

fn sentences(max_sentences: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec(prop::collection::vec(2..VOCAB, 1..7), 1..=max_sentences)
}

fn ratings() -> impl Strategy<Value = [u8; 3]> {
    [1u8..=3, 1u8..=3, 1u8..=3]
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

fn loss(model: &Model, d: &ReviewDocument) -> f64 {
    let arch = &model.config().architecture;
    let batch = make_batch(&[d], arch.s_max, arch.t_max);
    let mut g = Graph::new(model.params());
    let out = model
        .forward::<ChaCha8Rng>(&mut g, batch.doc(0), None)
        .unwrap();
    let l = loss_var(&mut g, &out.head, &batch.labels[0], LossWeights::default()).unwrap();
    g.value(l).data()[0]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..6,
        cols in 1usize..7,
        seed in any::<u64>(),
        scale in 0.1f64..80.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(&[rows, cols], scale, &mut rng);
        let store = saam_core::ParamStore::new();
        let mut g = Graph::new(&store);
        let v = g.constant(x).unwrap();
        let s = g.softmax(v).unwrap();
        for r in g.value(s).to_rows() {
            prop_assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn model_outputs_are_normalized(
        v in variant(),
        k in 0usize..3,
        seed in 0u64..1000,
        s in sentences(6),
        r in ratings(),
    ) {
        let m = model(v, encoder(k), seed);
        let (pred, attr) = m.predict(&doc(s, r)).unwrap();
        for p in std::iter::once(&pred.overall).chain(&pred.aspects) {
            match p {
                Prediction::Distribution(d) => {
                    prop_assert!(v.is_classification());
                    prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
                Prediction::Scalar(x) => {
                    prop_assert!(!v.is_classification());
                    prop_assert!(x.is_finite());
                }
            }
        }
        prop_assert_eq!(attr.is_some(), v.has_attribution());
        if let Some(a) = attr {
            for row in &a.aspect_dist {
                prop_assert_eq!(row.len(), v.attribution_slots(2));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_slots_are_ignored(
        v in variant(),
        k in 0usize..3,
        seed in 0u64..1000,
        s in sentences(3),
        junk in prop::collection::vec(1..VOCAB, 24),
    ) {
        let m = model(v, encoder(k), seed);
        let d = doc(s, [2, 2, 2]);
        let arch = &m.config().architecture;
        let clean = make_batch(&[&d], arch.s_max, arch.t_max);
        let mut dirty = clean.clone();
        // fill every masked sentence slot with real-looking tokens
        for slot in 0..arch.s_max {
            if !dirty.sentence_mask[slot] {
                for t in 0..arch.t_max {
                    let i = slot * arch.t_max + t;
                    dirty.token_ids[i] = junk[i % junk.len()];
                    dirty.token_mask[i] = true;
                }
            }
        }
        let run = |b: &saam_core::text::PaddedBatch| {
            let mut g = Graph::new(m.params());
            let out = m.forward::<ChaCha8Rng>(&mut g, b.doc(0), None).unwrap();
            (out.head.predictions(&g), out.head.attribution(&g))
        };
        prop_assert_eq!(run(&clean), run(&dirty));
    }

    #[test]
    fn losses_are_non_negative(
        v in variant(),
        k in 0usize..3,
        seed in 0u64..1000,
        s in sentences(5),
        r in ratings(),
    ) {
        let m = model(v, encoder(k), seed);
        let d = doc(s, r);
        prop_assert!(loss(&m, &d) >= 0.0);
        let (pred, _) = m.predict(&d).unwrap();
        let plain = if v.is_classification() {
            classification_loss(&pred, &d.targets(), LossWeights::default()).unwrap()
        } else {
            regression_loss(&pred, &d.targets(), LossWeights::default()).unwrap()
        };
        prop_assert!(plain >= 0.0);
        prop_assert!(close(plain, loss(&m, &d), 1e-9));
    }

    #[test]
    fn small_gradient_steps_descend(
        v in variant(),
        gru in any::<bool>(),
        seed in 0u64..1000,
        s in sentences(4),
        r in ratings(),
    ) {
        // smooth encoders only; relu kinks break the first-order argument
        let enc = if gru { EncoderConfig::gru(5, 8) } else { EncoderConfig::mean(8) };
        let m = model(v, enc, seed);
        let d = doc(s, r);
        let before = loss(&m, &d);
        let arch = &m.config().architecture;
        let batch = make_batch(&[&d], arch.s_max, arch.t_max);
        let mut grads = GradStore::zeros_like(m.params());
        let mut g = Graph::new(m.params());
        let out = m.forward::<ChaCha8Rng>(&mut g, batch.doc(0), None).unwrap();
        let l = loss_var(&mut g, &out.head, &batch.labels[0], LossWeights::default()).unwrap();
        g.backward(l, &mut grads).unwrap();
        let norm2 = grads.global_norm().powi(2);
        prop_assume!(norm2 > 1e-8);

        let mut decreased = 0;
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let lr = eps / norm2.sqrt();
            let mut stepped = model(v, m.config().architecture.encoder.clone(), seed);
            let mut opt = Optimizer::new(OptimizerKind::Sgd, lr, stepped.params());
            opt.step(stepped.params_mut(), &grads);
            let after = loss(&stepped, &d);
            if after < before {
                decreased += 1;
            }
            if eps == 1e-5 {
                // first-order prediction of the change
                let predicted = -lr * norm2;
                prop_assert!(close(after - before, predicted, 0.05) || (after - before - predicted).abs() < 1e-9,
                    "eps {eps}: actual {} predicted {predicted}", after - before);
            }
        }
        prop_assert!(decreased >= 2);
    }

    #[test]
    fn snippets_are_filtered_and_ordered(
        rows in prop::collection::vec((0.0f64..1.0, -5.0f64..5.0), 1..12),
        tau in 0.0f64..0.99,
        lowest in any::<bool>(),
        top_k in prop::option::of(0usize..5),
    ) {
        let attr = AttributionResult {
            variant: Variant::R,
            num_aspects: 2,
            aspect_dist: rows.iter().map(|(w, _)| vec![*w, (1.0 - w) / 2.0, (1.0 - w) / 2.0]).collect(),
            rating_scores: rows.iter().map(|(_, s)| vec![*s]).collect(),
            scaled_scores: vec![],
        };
        let texts: Vec<String> = (0..rows.len()).map(|i| format!("t{i}")).collect();
        let view = DocumentView { doc_id: "d", sentence_texts: &texts, attribution: &attr };
        let aspects = AspectSet::new(["A", "B"]).unwrap();
        let polarity = if lowest { Polarity::Lowest } else { Polarity::Highest };
        let all = extract_snippets(view, &aspects, "a", polarity, tau, None).unwrap();
        prop_assert_eq!(all.len(), rows.iter().filter(|(w, _)| *w >= tau).count());
        prop_assert!(all.iter().all(|s| s.weight >= tau && s.aspect == "A"));
        for w in all.windows(2) {
            if lowest {
                prop_assert!(w[0].score <= w[1].score);
            } else {
                prop_assert!(w[0].score >= w[1].score);
            }
            if w[0].score == w[1].score {
                prop_assert!(w[0].sentence_index < w[1].sentence_index);
            }
        }
        let cut = extract_snippets(view, &aspects, "A", polarity, tau, top_k).unwrap();
        let k = top_k.unwrap_or(usize::MAX).min(all.len());
        prop_assert_eq!(&cut[..], &all[..k]);
    }

    #[test]
    fn attribution_follows_sentence_permutation(
        seed in 0u64..1000,
        s in sentences(4),
        perm_seed in any::<u64>(),
        c1 in any::<bool>(),
    ) {
        use rand::seq::SliceRandom;
        let v = if c1 { Variant::C1 } else { Variant::R };
        let m = model(v, EncoderConfig::mean(8), seed);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let permuted: Vec<Vec<u32>> = order.iter().map(|&i| s[i].clone()).collect();
        let (pa, aa) = m.predict(&doc(s, [2, 2, 2])).unwrap();
        let (pb, ab) = m.predict(&doc(permuted, [2, 2, 2])).unwrap();
        let (aa, ab) = (aa.unwrap(), ab.unwrap());
        for (new, &old) in order.iter().enumerate() {
            for (x, y) in aa.aspect_dist[old].iter().zip(&ab.aspect_dist[new]) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
        // aspect ratings pool over sentences and ignore order
        for (x, y) in pa.aspects.iter().zip(&pb.aspects) {
            match (x, y) {
                (Prediction::Scalar(a), Prediction::Scalar(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Prediction::Distribution(a), Prediction::Distribution(b)) => {
                    for (p, q) in a.iter().zip(b) {
                        prop_assert!((p - q).abs() < 1e-9);
                    }
                }
                _ => prop_assert!(false, "prediction kinds differ"),
            }
        }
    }

    #[test]
    fn regression_aspects_are_bounded_weighted_averages(
        k in 0usize..3,
        seed in 0u64..1000,
        s in sentences(6),
    ) {
        let m = model(Variant::R, encoder(k), seed);
        let (pred, attr) = m.predict(&doc(s, [2, 2, 2])).unwrap();
        let scores: Vec<f64> = attr.unwrap().rating_scores.iter().map(|r| r[0]).collect();
        let lo = scores.iter().cloned().fold(0.0, f64::min);
        let hi = scores.iter().cloned().fold(0.0, f64::max);
        for p in &pred.aspects {
            let x = p.rating();
            prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12, "{x} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn kappa_of_identical_annotations_is_one(
        a in prop::collection::vec(0u8..4, 1..40),
        b in prop::collection::vec(0u8..4, 1..40),
    ) {
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        let n = a.len().min(b.len());
        let (x, y) = (&a[..n], &b[..n]);
        prop_assert!(close(cohen_kappa(x, y).unwrap(), cohen_kappa(y, x).unwrap(), 1e-12));
        prop_assert!(cohen_kappa(x, y).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn mean_predictor_has_zero_r_squared(gold in prop::collection::vec(-10.0f64..10.0, 2..50)) {
        let mean = gold.iter().sum::<f64>() / gold.len() as f64;
        let pred = vec![mean; gold.len()];
        match r_squared(&pred, &gold) {
            Some(r2) => prop_assert_eq!(r2, 0.0),
            None => prop_assert!(gold.iter().all(|g| *g == gold[0])),
        }
        prop_assert_eq!(r_squared(&gold, &gold).unwrap_or(1.0), 1.0);
        prop_assert_eq!(mean_squared_error(&gold, &gold), 0.0);
    }

    #[test]
    fn splits_partition_the_pool(n in 4usize..300, seed in any::<u64>(), frac in 0.5f64..0.9) {
        let cfg = SplitConfig { train_fraction: frac, dev_size: None, min_sentences: 1, seed };
        if let Ok(sp) = split_corpus((0..n).collect::<Vec<_>>(), &cfg, |_| true) {
            prop_assert_eq!(sp.train.len() + sp.dev.len(), (n as f64 * frac).floor() as usize);
            let mut all: Vec<usize> = sp.train.iter().chain(&sp.dev).chain(&sp.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(sp.dev.len(), ((n as f64 * frac).floor() as usize / 10).min(1000));
        }
    }

    #[test]
    fn vocabulary_and_checkpoint_round_trip(
        words in prop::collection::vec("[a-z]{1,6}", 1..30),
        v in variant(),
        seed in 0u64..100,
    ) {
        let vocab = Vocabulary::from_texts(&words, 1);
        let back = Vocabulary::from_tsv(&vocab.to_tsv()).unwrap();
        prop_assert_eq!(back.hash(), vocab.hash());
        prop_assert_eq!(back.to_tsv(), vocab.to_tsv());

        let m = model(v, EncoderConfig::mean(8), seed);
        let bytes = Checkpoint::from_model(&m, None, &vocab).to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert!(loaded.verify_vocabulary(&vocab).is_ok());
        prop_assert_eq!(loaded.to_bytes(), bytes);
    }
}
