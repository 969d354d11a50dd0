use super::corpus::{RatingTargets, ReviewDocument};
use super::vocab::Vocabulary;

/// Fixed-shape `batch x s_max x t_max` token ids with masks. Sentences
/// beyond `s_max` and tokens beyond `t_max` are truncated.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub s_max: usize,
    pub t_max: usize,
    pub token_ids: Vec<u32>,
    pub sentence_mask: Vec<bool>,
    pub token_mask: Vec<bool>,
    pub labels: Vec<RatingTargets>,
}

/// One document's slice of a [`PaddedBatch`].
#[derive(Clone, Copy, Debug)]
pub struct PaddedDoc<'a> {
    pub s_max: usize,
    pub t_max: usize,
    pub token_ids: &'a [u32],
    pub sentence_mask: &'a [bool],
    pub token_mask: &'a [bool],
}

impl PaddedDoc<'_> {
    /// Token ids and token mask of sentence slot `i`.
    pub fn sentence(&self, i: usize) -> (&[u32], &[bool]) {
        let r = i * self.t_max..(i + 1) * self.t_max;
        (&self.token_ids[r.clone()], &self.token_mask[r])
    }

    /// Real (unmasked) token ids of slot `i`.
    pub fn real_tokens(&self, i: usize) -> Vec<usize> {
        let (ids, mask) = self.sentence(i);
        ids.iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(id, _)| *id as usize)
            .collect()
    }

    pub fn num_real_sentences(&self) -> usize {
        self.sentence_mask.iter().filter(|m| **m).count()
    }
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn doc(&self, b: usize) -> PaddedDoc<'_> {
        let (s, t) = (self.s_max, self.t_max);
        PaddedDoc {
            s_max: s,
            t_max: t,
            token_ids: &self.token_ids[b * s * t..(b + 1) * s * t],
            sentence_mask: &self.sentence_mask[b * s..(b + 1) * s],
            token_mask: &self.token_mask[b * s * t..(b + 1) * s * t],
        }
    }
}

pub fn make_batch(docs: &[&ReviewDocument], s_max: usize, t_max: usize) -> PaddedBatch {
    let (s_max, t_max) = (s_max.max(1), t_max.max(1));
    let n = docs.len();
    let mut batch = PaddedBatch {
        s_max,
        t_max,
        token_ids: vec![Vocabulary::PAD; n * s_max * t_max],
        sentence_mask: vec![false; n * s_max],
        token_mask: vec![false; n * s_max * t_max],
        labels: Vec::with_capacity(n),
    };
    for (b, doc) in docs.iter().enumerate() {
        for (s, sentence) in doc.sentences.iter().take(s_max).enumerate() {
            batch.sentence_mask[b * s_max + s] = true;
            let base = (b * s_max + s) * t_max;
            for (t, &id) in sentence.iter().take(t_max).enumerate() {
                batch.token_ids[base + t] = id;
                batch.token_mask[base + t] = true;
            }
        }
        batch.labels.push(doc.targets());
    }
    batch
}
