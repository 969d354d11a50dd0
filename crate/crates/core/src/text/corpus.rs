//! Review documents, aspect sets and the line-delimited corpus format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{split_sentences, tokenize};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Ordered, non-empty set of unique aspect names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AspectSet {
    names: Vec<String>,
}

impl AspectSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("aspect set must not be empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::Config("aspect names must be non-empty".into()));
            }
            if names[..i].iter().any(|m| m.eq_ignore_ascii_case(n)) {
                return Err(Error::Config(format!("duplicate aspect {n:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn hotel() -> Self {
        Self::new(["Value", "Room", "Location", "Cleanliness", "Service"]).unwrap()
    }

    pub fn beer() -> Self {
        Self::new(["Appearance", "Taste", "Palate", "Aroma"]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// Case-insensitive lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}

impl TryFrom<Vec<String>> for AspectSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<AspectSet> for Vec<String> {
    fn from(a: AspectSet) -> Self {
        a.names
    }
}

/// Sentence-level aspect label, gold or silver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SentenceLabel {
    Aspect(usize),
    /// The sentence concerns none of the aspects (the other-aspect slot).
    None,
    /// Attributed to the overall rating (only produced by the C2 head).
    Overall,
    /// No evidence either way; excluded from attribution scoring.
    Unlabeled,
}

impl SentenceLabel {
    pub fn parse(s: &str, aspects: &AspectSet) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "overall" => Ok(Self::Overall),
            "unlabeled" | "" => Ok(Self::Unlabeled),
            _ => aspects
                .index_of(s)
                .map(Self::Aspect)
                .ok_or_else(|| Error::Data(format!("unknown sentence label {s:?}"))),
        }
    }

    pub fn render(self, aspects: &AspectSet) -> String {
        match self {
            Self::Aspect(i) => aspects.name(i).to_string(),
            Self::None => "none".into(),
            Self::Overall => "overall".into(),
            Self::Unlabeled => "unlabeled".into(),
        }
    }
}

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    pub overall: f64,
    #[serde(default)]
    pub aspects: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_labels: Option<Vec<String>>,
}

impl CorpusRecord {
    /// Sentence strings: the `sentences` field when present, otherwise the
    /// segmented `text`.
    pub fn sentence_texts(&self) -> Vec<String> {
        match (&self.sentences, &self.text) {
            (Some(s), _) => s.iter().map(|x| x.trim().to_string()).collect(),
            (None, Some(t)) => split_sentences(t),
            (None, None) => Vec::new(),
        }
    }

    pub fn rating(&self, aspect: &str) -> Option<f64> {
        self.aspects
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(aspect))
            .and_then(|(_, v)| *v)
            .filter(|v| v.is_finite())
    }

    /// Aspects of `set` this record does not rate.
    pub fn missing_aspects(&self, set: &AspectSet) -> Vec<String> {
        set.names()
            .iter()
            .filter(|n| self.rating(n).is_none())
            .cloned()
            .collect()
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| Error::Record {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.text.is_none() && rec.sentences.is_none() {
            return Err(Error::Record {
                line: i + 1,
                msg: "record needs `text` or `sentences`".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn corpus_to_string(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        // serializing plain data cannot fail
        let line = serde_json::to_string(r).expect("serializable record");
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, corpus_to_string(records)).map_err(|e| Error::io(path, e))
}

/// Document-level supervision: overall rating plus one rating per aspect.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTargets {
    pub overall: f64,
    pub aspects: Vec<f64>,
}

/// A tokenized review ready for batching.
#[derive(Clone, Debug, PartialEq)]
pub struct ReviewDocument {
    pub doc_id: String,
    pub sentences: Vec<Vec<u32>>,
    pub sentence_texts: Vec<String>,
    pub overall_rating: f64,
    pub aspect_ratings: Vec<f64>,
    pub sentence_labels: Option<Vec<SentenceLabel>>,
}

impl ReviewDocument {
    /// Tokenizes a record. Fails if an aspect is unrated or the label list
    /// does not align with the sentences. Sentences without any token are
    /// dropped together with their labels.
    pub fn from_record(
        rec: &CorpusRecord,
        aspects: &AspectSet,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let missing = rec.missing_aspects(aspects);
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "document {} has no rating for {}",
                rec.doc_id,
                missing.join(", ")
            )));
        }
        if !rec.overall.is_finite() {
            return Err(Error::Data(format!(
                "document {} has a non-finite overall rating",
                rec.doc_id
            )));
        }
        let texts = rec.sentence_texts();
        let labels = match &rec.sentence_labels {
            Some(l) if l.len() != texts.len() => {
                return Err(Error::Data(format!(
                    "document {}: {} sentence labels for {} sentences",
                    rec.doc_id,
                    l.len(),
                    texts.len()
                )))
            }
            Some(l) => Some(
                l.iter()
                    .map(|s| SentenceLabel::parse(s, aspects))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let mut sentences = Vec::new();
        let mut sentence_texts = Vec::new();
        let mut kept_labels = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let ids = vocab.encode(&tokenize(t));
            if ids.is_empty() {
                continue;
            }
            sentences.push(ids);
            sentence_texts.push(t.clone());
            if let Some(l) = &labels {
                kept_labels.push(l[i]);
            }
        }
        Ok(Self {
            doc_id: rec.doc_id.clone(),
            sentences,
            sentence_texts,
            overall_rating: rec.overall,
            aspect_ratings: aspects
                .names()
                .iter()
                .map(|n| rec.rating(n).expect("checked above"))
                .collect(),
            sentence_labels: labels.map(|_| kept_labels),
        })
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn targets(&self) -> RatingTargets {
        RatingTargets {
            overall: self.overall_rating,
            aspects: self.aspect_ratings.clone(),
        }
    }
}
