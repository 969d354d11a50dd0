//! Sentence snippets that explain aspect ratings.
//!
//! Candidates are the sentences whose attribution weight for an aspect
//! reaches a threshold `tau`; they are ranked by their raw sentence score.
//! Classification heads use the expected class value of the sentence score
//! distribution as the score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{AttributionResult, PredictionSet};
use crate::text::AspectSet;

pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_MARGIN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Highest,
    Lowest,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Highest => "highest",
            Self::Lowest => "lowest",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "highest" => Ok(Self::Highest),
            "lowest" => Ok(Self::Lowest),
            _ => Err(Error::Config(format!("unknown polarity {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub sentence_index: usize,
    pub text: String,
    pub aspect: String,
    /// Attribution weight of the sentence for `aspect`.
    pub weight: f64,
    /// Raw sentence score (not scaled by the weight).
    pub score: f64,
    pub polarity: Polarity,
}

impl Snippet {
    /// `"text" [Aspect, -2.890] weight 0.800`
    pub fn render(&self) -> String {
        format!(
            "{}\t{:?} [{}, {:.3}] weight {:.3}",
            self.doc_id, self.text, self.aspect, self.score, self.weight
        )
    }
}

/// One scalar score per sentence: the raw score for regression heads, the
/// expected class value `Σ_c (c+1)·softmax(score)[c]` for classification.
pub fn sentence_scores(attr: &AttributionResult) -> Vec<f64> {
    attr.rating_scores
        .iter()
        .map(|row| {
            if row.len() == 1 {
                return row[0];
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter()
                .enumerate()
                .map(|(c, v)| (c + 1) as f64 * v / z)
                .sum()
        })
        .collect()
}

/// Inputs shared by the snippet functions for one document.
#[derive(Clone, Copy, Debug)]
pub struct DocumentView<'a> {
    pub doc_id: &'a str,
    pub sentence_texts: &'a [String],
    pub attribution: &'a AttributionResult,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1), got {tau}")));
    }
    Ok(())
}

fn ranked(
    view: DocumentView<'_>,
    aspect: usize,
    name: &str,
    polarity: Polarity,
    tau: f64,
) -> Vec<Snippet> {
    let scores = sentence_scores(view.attribution);
    let mut out: Vec<Snippet> = view
        .attribution
        .aspect_dist
        .iter()
        .enumerate()
        .filter(|(_, row)| row[aspect] >= tau)
        .map(|(i, row)| Snippet {
            doc_id: view.doc_id.to_string(),
            sentence_index: i,
            text: view.sentence_texts.get(i).cloned().unwrap_or_default(),
            aspect: name.to_string(),
            weight: row[aspect],
            score: scores[i],
            polarity,
        })
        .collect();
    // stable: equal scores stay in sentence order
    match polarity {
        Polarity::Lowest => out.sort_by(|a, b| a.score.total_cmp(&b.score)),
        Polarity::Highest => out.sort_by(|a, b| b.score.total_cmp(&a.score)),
    }
    out
}

/// Sentences attributed to `aspect` with weight at least `tau`, ordered by
/// score in the requested direction and cut to `top_k` if given.
pub fn extract_snippets(
    view: DocumentView<'_>,
    aspects: &AspectSet,
    aspect: &str,
    polarity: Polarity,
    tau: f64,
    top_k: Option<usize>,
) -> Result<Vec<Snippet>> {
    check_tau(tau)?;
    let j = aspects
        .index_of(aspect)
        .ok_or_else(|| Error::Config(format!("unknown aspect {aspect:?}")))?;
    let mut out = ranked(view, j, aspects.name(j), polarity, tau);
    if let Some(k) = top_k {
        out.truncate(k);
    }
    Ok(out)
}

/// For every aspect whose predicted rating differs from the predicted
/// overall rating by more than `margin`, the most extreme snippet on the
/// deviating side. Aspects come out in aspect order.
pub fn explain_discrepancy(
    view: DocumentView<'_>,
    predictions: &PredictionSet,
    aspects: &AspectSet,
    tau: f64,
    margin: f64,
) -> Vec<Snippet> {
    let overall = predictions.overall.expected_rating();
    let mut out = Vec::new();
    for (j, pred) in predictions.aspects.iter().enumerate().take(aspects.len()) {
        let deviation = pred.expected_rating() - overall;
        if deviation.abs() <= margin {
            continue;
        }
        let polarity = if deviation < 0.0 {
            Polarity::Lowest
        } else {
            Polarity::Highest
        };
        if let Some(s) = ranked(view, j, aspects.name(j), polarity, tau)
            .into_iter()
            .next()
        {
            out.push(s);
        }
    }
    out
}
