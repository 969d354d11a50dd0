use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::ReviewDocument;
use crate::error::{Error, Result};

/// Upper bound on the development set when its size is not given.
pub const DEFAULT_DEV_CAP: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of the filtered corpus that goes to train (+ dev).
    pub train_fraction: f64,
    /// Dev documents carved out of train. `None` means
    /// `min(1000, train / 10)`.
    pub dev_size: Option<usize>,
    /// Documents need at least this many sentences.
    pub min_sentences: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            dev_size: None,
            min_sentences: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Filters with `qualifies`, shuffles deterministically by seed, then cuts
/// train/test at `train_fraction` and moves the dev documents out of train.
pub fn split_corpus<T>(
    items: Vec<T>,
    cfg: &SplitConfig,
    qualifies: impl Fn(&T) -> bool,
) -> Result<Splits<T>> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} must lie in (0, 1)",
            cfg.train_fraction
        )));
    }
    let mut pool: Vec<T> = items.into_iter().filter(|d| qualifies(d)).collect();
    let n = pool.len();
    let n_train = (n as f64 * cfg.train_fraction).floor() as usize;
    let n_test = n - n_train;
    let n_dev = cfg
        .dev_size
        .unwrap_or_else(|| DEFAULT_DEV_CAP.min(n_train / 10));
    if n_test == 0 || n_train <= n_dev {
        return Err(Error::Data(format!(
            "insufficient data: {n} qualifying documents give {n_train} train \
             ({n_dev} held for dev) and {n_test} test"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pool.shuffle(&mut rng);
    let test = pool.split_off(n_train);
    let train = pool.split_off(n_dev);
    Ok(Splits {
        train,
        dev: pool,
        test,
    })
}

/// [`split_corpus`] over tokenized documents using the sentence-count rule.
pub fn split_documents(
    docs: Vec<ReviewDocument>,
    cfg: &SplitConfig,
) -> Result<Splits<ReviewDocument>> {
    let min = cfg.min_sentences;
    split_corpus(docs, cfg, |d| {
        d.num_sentences() >= min && d.aspect_ratings.iter().all(|r| r.is_finite())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: usize, sentences: usize) -> ReviewDocument {
        ReviewDocument {
            doc_id: format!("d{id}"),
            sentences: vec![vec![2]; sentences],
            sentence_texts: vec!["x".into(); sentences],
            overall_rating: 3.0,
            aspect_ratings: vec![3.0],
            sentence_labels: None,
        }
    }

    #[test]
    fn sizes_follow_the_75_25_rule() {
        let docs: Vec<_> = (0..100).map(|i| doc(i, 5)).collect();
        let cfg = SplitConfig {
            dev_size: Some(10),
            seed: 3,
            ..Default::default()
        };
        let s = split_documents(docs, &cfg).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (65, 10, 25));
    }

    #[test]
    fn three_sentence_docs_excluded() {
        let mut docs: Vec<_> = (0..40).map(|i| doc(i, 4)).collect();
        docs.push(doc(999, 3));
        let s = split_documents(docs, &SplitConfig::default()).unwrap();
        let all: Vec<_> = s.train.iter().chain(&s.dev).chain(&s.test).collect();
        assert_eq!(all.len(), 40);
        assert!(all.iter().all(|d| d.doc_id != "d999"));
    }

    #[test]
    fn deterministic_by_seed() {
        let docs: Vec<_> = (0..50).map(|i| doc(i, 4)).collect();
        let cfg = SplitConfig::default();
        let a = split_documents(docs.clone(), &cfg).unwrap();
        let b = split_documents(docs.clone(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = split_documents(docs, &SplitConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn default_dev_is_a_tenth_of_train() {
        let docs: Vec<_> = (0..200).map(|i| doc(i, 4)).collect();
        let s = split_documents(docs, &SplitConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (135, 15, 50));
    }

    #[test]
    fn insufficient_documents() {
        let docs: Vec<_> = (0..3).map(|i| doc(i, 4)).collect();
        let cfg = SplitConfig {
            dev_size: Some(5),
            ..Default::default()
        };
        assert!(matches!(split_documents(docs, &cfg), Err(Error::Data(_))));
    }
}
