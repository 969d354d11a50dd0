//! Synthetic review corpora with known sentence-level aspects.
//!
//! Every aspect sentence is made of keywords from that aspect's vocabulary
//! plus one sentiment token `sent_{r}_{k}`, where `r` is the document's
//! rating for that aspect. The generator therefore knows the true aspect and
//! the true score of every sentence.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{AspectSet, CorpusRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_aspects: usize,
    /// Aspect names; defaults to `aspect1..`.
    pub aspect_names: Option<Vec<String>>,
    /// Explicit keyword lists per aspect. Must be pairwise disjoint.
    pub aspect_vocab: Option<Vec<Vec<String>>>,
    /// Size of each generated keyword list when `aspect_vocab` is unset.
    pub keywords_per_aspect: usize,
    pub keywords_per_sentence: usize,
    /// Distinct sentiment tokens per rating value.
    pub sentiment_variants: usize,
    pub sentences_per_aspect: usize,
    /// Extra sentences built from filler words, gold label "none".
    pub filler_sentences: usize,
    /// Probability that a keyword slot is filled from a pool shared by all
    /// aspects instead of the sentence's own aspect vocabulary.
    pub overlap: f64,
    /// Ratings are drawn uniformly from `1..=rating_levels`.
    pub rating_levels: u32,
    pub num_docs: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_aspects: 2,
            aspect_names: None,
            aspect_vocab: None,
            keywords_per_aspect: 8,
            keywords_per_sentence: 2,
            sentiment_variants: 3,
            sentences_per_aspect: 1,
            filler_sentences: 0,
            overlap: 0.0,
            rating_levels: 5,
            num_docs: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub aspects: AspectSet,
    /// Records carry `sentences` and gold `sentence_labels`.
    pub records: Vec<CorpusRecord>,
}

pub fn sentiment_token(rating: u32, variant: usize) -> String {
    format!("sent_{rating}_{variant}")
}

/// Rating encoded in a sentiment token, if it is one.
pub fn sentiment_rating(token: &str) -> Option<u32> {
    let rest = token.strip_prefix("sent_")?;
    rest.split('_').next()?.parse().ok()
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let names = match &cfg.aspect_names {
        Some(n) => n.clone(),
        None => (1..=cfg.num_aspects)
            .map(|i| format!("aspect{i}"))
            .collect(),
    };
    let aspects = AspectSet::new(names)?;
    let n_aspects = aspects.len();
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::Config("overlap must lie in [0, 1)".into()));
    }
    if cfg.rating_levels < 2 || cfg.keywords_per_sentence == 0 || cfg.sentiment_variants == 0 {
        return Err(Error::Config(
            "need >= 2 rating levels, >= 1 keyword per sentence and >= 1 sentiment variant".into(),
        ));
    }
    if cfg.sentences_per_aspect == 0 {
        return Err(Error::Config(
            "sentences_per_aspect must be positive".into(),
        ));
    }

    let vocab: Vec<Vec<String>> = match &cfg.aspect_vocab {
        Some(v) => {
            if v.len() != n_aspects || v.iter().any(Vec::is_empty) {
                return Err(Error::Config(
                    "need one non-empty keyword list per aspect".into(),
                ));
            }
            let mut owner: HashMap<&str, usize> = HashMap::new();
            for (a, words) in v.iter().enumerate() {
                for w in words {
                    if let Some(&b) = owner.get(w.as_str()) {
                        if b != a {
                            return Err(Error::Config(format!(
                                "overlapping vocabularies: {w:?} belongs to {} and {}",
                                aspects.name(b),
                                aspects.name(a)
                            )));
                        }
                    }
                    owner.insert(w, a);
                }
            }
            v.clone()
        }
        None => {
            if cfg.keywords_per_aspect == 0 {
                return Err(Error::Config("keywords_per_aspect must be positive".into()));
            }
            aspects
                .names()
                .iter()
                .map(|n| {
                    (0..cfg.keywords_per_aspect)
                        .map(|k| format!("{}_kw{k}", slug(n)))
                        .collect()
                })
                .collect()
        }
    };
    let shared: Vec<String> = (0..cfg.keywords_per_aspect.max(1))
        .map(|k| format!("shared_kw{k}"))
        .collect();
    let filler: Vec<String> = (0..cfg.keywords_per_aspect.max(1))
        .map(|k| format!("filler_kw{k}"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.num_docs);
    for d in 0..cfg.num_docs {
        let ratings: Vec<u32> = (0..n_aspects)
            .map(|_| rng.gen_range(1..=cfg.rating_levels))
            .collect();
        let mut sentences: Vec<(String, String)> = Vec::new();
        for (a, &r) in ratings.iter().enumerate() {
            for _ in 0..cfg.sentences_per_aspect {
                let mut words: Vec<&str> = (0..cfg.keywords_per_sentence)
                    .map(|_| {
                        let pool = if cfg.overlap > 0.0 && rng.gen_bool(cfg.overlap) {
                            &shared
                        } else {
                            &vocab[a]
                        };
                        pool.choose(&mut rng).expect("non-empty pool").as_str()
                    })
                    .collect();
                let sent = sentiment_token(r, rng.gen_range(0..cfg.sentiment_variants));
                words.push(&sent);
                sentences.push((format!("{}.", words.join(" ")), aspects.name(a).to_string()));
            }
        }
        for _ in 0..cfg.filler_sentences {
            let words: Vec<&str> = (0..cfg.keywords_per_sentence)
                .map(|_| filler.choose(&mut rng).expect("non-empty pool").as_str())
                .collect();
            sentences.push((format!("{}.", words.join(" ")), "none".to_string()));
        }
        sentences.shuffle(&mut rng);

        let mean = ratings.iter().map(|&r| r as f64).sum::<f64>() / n_aspects as f64;
        let aspect_map: BTreeMap<String, Option<f64>> = aspects
            .names()
            .iter()
            .zip(&ratings)
            .map(|(n, &r)| (n.clone(), Some(r as f64)))
            .collect();
        let (texts, labels): (Vec<String>, Vec<String>) = sentences.into_iter().unzip();
        records.push(CorpusRecord {
            doc_id: format!("syn-{d:06}"),
            text: None,
            sentences: Some(texts),
            overall: mean.round(),
            aspects: aspect_map,
            sentence_labels: Some(labels),
        });
    }
    Ok(SyntheticCorpus { aspects, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{corpus_to_string, tokenize};

    #[test]
    fn one_sentence_per_aspect() {
        let c = generate_synthetic_corpus(&SyntheticConfig {
            num_docs: 20,
            ..Default::default()
        })
        .unwrap();
        for r in &c.records {
            let labels = r.sentence_labels.as_ref().unwrap();
            assert_eq!(r.sentences.as_ref().unwrap().len(), 2);
            let mut sorted = labels.clone();
            sorted.sort();
            assert_eq!(sorted, vec!["aspect1", "aspect2"]);
        }
    }

    #[test]
    fn overall_is_rounded_mean() {
        let c = generate_synthetic_corpus(&SyntheticConfig {
            num_docs: 300,
            ..Default::default()
        })
        .unwrap();
        let r = c
            .records
            .iter()
            .find(|r| r.rating("aspect1") == Some(5.0) && r.rating("aspect2") == Some(1.0))
            .expect("some document rates (5, 1)");
        assert_eq!(r.overall, 3.0);
    }

    #[test]
    fn sentiment_tokens_encode_aspect_rating() {
        let c = generate_synthetic_corpus(&SyntheticConfig {
            num_aspects: 3,
            num_docs: 50,
            filler_sentences: 1,
            ..Default::default()
        })
        .unwrap();
        for r in &c.records {
            for (s, label) in r
                .sentences
                .as_ref()
                .unwrap()
                .iter()
                .zip(r.sentence_labels.as_ref().unwrap())
            {
                let toks = tokenize(s);
                let rating = toks.iter().find_map(|t| sentiment_rating(t));
                if label == "none" {
                    assert_eq!(rating, None);
                } else {
                    assert_eq!(rating.map(f64::from), r.rating(label));
                }
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = SyntheticConfig {
            num_docs: 30,
            overlap: 0.3,
            seed: 11,
            ..Default::default()
        };
        let a = corpus_to_string(&generate_synthetic_corpus(&cfg).unwrap().records);
        let b = corpus_to_string(&generate_synthetic_corpus(&cfg).unwrap().records);
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_vocabularies_rejected() {
        let cfg = SyntheticConfig {
            aspect_vocab: Some(vec![
                vec!["bed".into(), "view".into()],
                vec!["staff".into(), "view".into()],
            ]),
            ..Default::default()
        };
        let err = generate_synthetic_corpus(&cfg).unwrap_err().to_string();
        assert!(err.contains("overlapping"), "{err}");
    }
}
