//! Rating metrics, attribution accuracy and agreement.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::heads::{Prediction, PredictionSet};
use crate::text::{AspectSet, RatingTargets, SentenceLabel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub name: String,
    /// Exact-class accuracy; classification only.
    pub accuracy: Option<f64>,
    pub mse: f64,
    /// `None` when the gold ratings have zero variance or R² was not computed.
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub samples: usize,
    /// Overall first, then one entry per aspect.
    pub targets: Vec<TargetMetrics>,
    /// Averages over aspects only.
    pub avg_aspect_accuracy: Option<f64>,
    pub avg_aspect_mse: f64,
    pub avg_aspect_r2: Option<f64>,
    pub attribution_accuracy: Option<f64>,
}

pub fn mean_squared_error(pred: &[f64], gold: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(gold)
        .map(|(p, g)| (p - g).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

/// Coefficient of determination; undefined when the gold values are constant.
pub fn r_squared(pred: &[f64], gold: &[f64]) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let mean = gold.iter().sum::<f64>() / gold.len() as f64;
    let ss_tot: f64 = gold.iter().map(|g| (g - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return None;
    }
    let ss_res: f64 = pred.iter().zip(gold).map(|(p, g)| (p - g).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

fn check_lengths(
    preds: &[PredictionSet],
    golds: &[RatingTargets],
    aspects: &AspectSet,
) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} gold documents",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("no documents to evaluate".into()));
    }
    let a = aspects.len();
    if preds.iter().any(|p| p.aspects.len() != a) || golds.iter().any(|g| g.aspects.len() != a) {
        return Err(Error::Data(format!(
            "expected {a} aspect ratings per document"
        )));
    }
    Ok(())
}

/// Per target: `(predicted ratings, gold ratings)`, overall first.
fn columns(
    preds: &[PredictionSet],
    golds: &[RatingTargets],
    a: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pick = |p: &PredictionSet, t: usize| {
        if t == 0 {
            p.overall.rating()
        } else {
            p.aspects[t - 1].rating()
        }
    };
    let gold = |g: &RatingTargets, t: usize| if t == 0 { g.overall } else { g.aspects[t - 1] };
    (0..=a)
        .map(|t| {
            (
                preds.iter().map(|p| pick(p, t)).collect(),
                golds.iter().map(|g| gold(g, t)).collect(),
            )
        })
        .collect()
}

fn target_names(aspects: &AspectSet) -> Vec<String> {
    std::iter::once("overall".to_string())
        .chain(aspects.names().iter().cloned())
        .collect()
}

fn average(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Accuracy and MSE of argmax classes. The argmax class `k` stands for
/// rating `k + 1`.
pub fn classification_metrics(
    preds: &[PredictionSet],
    golds: &[RatingTargets],
    aspects: &AspectSet,
) -> Result<MetricReport> {
    check_lengths(preds, golds, aspects)?;
    if preds
        .iter()
        .any(|p| matches!(p.overall, Prediction::Scalar(_)))
    {
        return Err(Error::Data(
            "classification metrics need class distributions".into(),
        ));
    }
    let targets: Vec<TargetMetrics> = columns(preds, golds, aspects.len())
        .into_iter()
        .zip(target_names(aspects))
        .map(|((p, g), name)| TargetMetrics {
            name,
            accuracy: Some(
                p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / p.len() as f64,
            ),
            mse: mean_squared_error(&p, &g),
            r2: None,
        })
        .collect();
    let aspect = &targets[1..];
    Ok(MetricReport {
        samples: preds.len(),
        avg_aspect_accuracy: Some(average(aspect.iter().filter_map(|t| t.accuracy))),
        avg_aspect_mse: average(aspect.iter().map(|t| t.mse)),
        avg_aspect_r2: None,
        attribution_accuracy: None,
        targets,
    })
}

/// MSE and R² of scalar predictions.
pub fn regression_metrics(
    preds: &[PredictionSet],
    golds: &[RatingTargets],
    aspects: &AspectSet,
) -> Result<MetricReport> {
    check_lengths(preds, golds, aspects)?;
    let targets: Vec<TargetMetrics> = columns(preds, golds, aspects.len())
        .into_iter()
        .zip(target_names(aspects))
        .map(|((p, g), name)| TargetMetrics {
            name,
            accuracy: None,
            mse: mean_squared_error(&p, &g),
            r2: r_squared(&p, &g),
        })
        .collect();
    let aspect = &targets[1..];
    let r2: Option<Vec<f64>> = aspect.iter().map(|t| t.r2).collect();
    Ok(MetricReport {
        samples: preds.len(),
        avg_aspect_accuracy: None,
        avg_aspect_mse: average(aspect.iter().map(|t| t.mse)),
        avg_aspect_r2: r2.map(|v| average(v.into_iter())),
        attribution_accuracy: None,
        targets,
    })
}

/// Dispatches on the prediction kind.
pub fn rating_metrics(
    preds: &[PredictionSet],
    golds: &[RatingTargets],
    aspects: &AspectSet,
) -> Result<MetricReport> {
    match preds.first().map(|p| &p.overall) {
        Some(Prediction::Distribution(_)) => classification_metrics(preds, golds, aspects),
        _ => regression_metrics(preds, golds, aspects),
    }
}

/// Fraction of gold-labelled sentences whose predicted label matches.
/// `Unlabeled` gold sentences are skipped.
pub fn attribution_accuracy(pred: &[SentenceLabel], gold: &[SentenceLabel]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} predicted labels for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let scored: Vec<bool> = pred
        .iter()
        .zip(gold)
        .filter(|(_, g)| **g != SentenceLabel::Unlabeled)
        .map(|(p, g)| p == g)
        .collect();
    if scored.is_empty() {
        return Err(Error::Data("no labelled sentences to score".into()));
    }
    Ok(scored.iter().filter(|m| **m).count() as f64 / scored.len() as f64)
}

/// Cohen's kappa between two annotators over the same items. Perfect
/// expected agreement (a single shared category) counts as kappa 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Data(
            "kappa needs two equally long non-empty label lists".into(),
        ));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ca: HashMap<&T, f64> = HashMap::new();
    let mut cb: HashMap<&T, f64> = HashMap::new();
    for x in a {
        *ca.entry(x).or_default() += 1.0;
    }
    for y in b {
        *cb.entry(y).or_default() += 1.0;
    }
    let expected: f64 = ca
        .iter()
        .map(|(k, c)| c / n * cb.get(k).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - expected).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

fn json_num(v: Option<f64>) -> Value {
    v.and_then(serde_json::Number::from_f64)
        .map_or(Value::Null, Value::Number)
}

impl MetricReport {
    /// `key: value` lines, six decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("samples: {}\n", self.samples);
        for t in &self.targets {
            if t.accuracy.is_some() {
                out += &format!("{}.accuracy: {}\n", t.name, fmt_opt(t.accuracy));
            }
            out += &format!("{}.mse: {:.6}\n", t.name, t.mse);
            if self.avg_aspect_accuracy.is_none() {
                out += &format!("{}.r2: {}\n", t.name, fmt_opt(t.r2));
            }
        }
        if self.avg_aspect_accuracy.is_some() {
            out += &format!(
                "avg_aspect.accuracy: {}\n",
                fmt_opt(self.avg_aspect_accuracy)
            );
        }
        out += &format!("avg_aspect.mse: {:.6}\n", self.avg_aspect_mse);
        if self.avg_aspect_accuracy.is_none() {
            out += &format!("avg_aspect.r2: {}\n", fmt_opt(self.avg_aspect_r2));
        }
        if self.attribution_accuracy.is_some() {
            out += &format!(
                "attribution.accuracy: {}\n",
                fmt_opt(self.attribution_accuracy)
            );
        }
        out
    }

    /// Flat JSON object with the same keys as [`to_text`](Self::to_text);
    /// undefined values are `null`.
    pub fn to_flat_json(&self) -> Value {
        let round = |x: f64| (x * 1e6).round() / 1e6;
        let num = |x: Option<f64>| json_num(x.map(round));
        let mut m = Map::new();
        m.insert("samples".into(), Value::from(self.samples));
        let classification = self.avg_aspect_accuracy.is_some();
        for t in &self.targets {
            if classification {
                m.insert(format!("{}.accuracy", t.name), num(t.accuracy));
            }
            m.insert(format!("{}.mse", t.name), num(Some(t.mse)));
            if !classification {
                m.insert(format!("{}.r2", t.name), num(t.r2));
            }
        }
        if classification {
            m.insert("avg_aspect.accuracy".into(), num(self.avg_aspect_accuracy));
        }
        m.insert("avg_aspect.mse".into(), num(Some(self.avg_aspect_mse)));
        if !classification {
            m.insert("avg_aspect.r2".into(), num(self.avg_aspect_r2));
        }
        if self.attribution_accuracy.is_some() {
            m.insert(
                "attribution.accuracy".into(),
                num(self.attribution_accuracy),
            );
        }
        Value::Object(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(class: usize) -> Prediction {
        let mut p = vec![0.05; 5];
        p[class] = 0.8;
        Prediction::Distribution(p)
    }

    fn targets(overall: f64, aspects: &[f64]) -> RatingTargets {
        RatingTargets {
            overall,
            aspects: aspects.to_vec(),
        }
    }

    #[test]
    fn classification_uses_argmax_plus_one() {
        let set = AspectSet::new(["a", "b"]).unwrap();
        let preds = vec![
            PredictionSet {
                overall: dist(3),
                aspects: vec![dist(4), dist(0)],
            },
            PredictionSet {
                overall: dist(1),
                aspects: vec![dist(2), dist(2)],
            },
        ];
        let golds = vec![targets(4.0, &[5.0, 3.0]), targets(2.0, &[1.0, 3.0])];
        // aspect a: preds {5, 3} vs golds {5, 1}
        let r = classification_metrics(&preds, &golds, &set).unwrap();
        assert_eq!(r.targets[0].accuracy, Some(1.0));
        assert_eq!(r.targets[1].accuracy, Some(0.5));
        assert_eq!(r.targets[1].mse, 2.0);
        assert_eq!(r.targets[2].accuracy, Some(0.5));
        assert_eq!(r.targets[2].mse, 2.0);
        assert_eq!(r.avg_aspect_accuracy, Some(0.5));
        assert_eq!(r.avg_aspect_mse, 2.0);
    }

    #[test]
    fn regression_r2_and_undefined() {
        let set = AspectSet::new(["a"]).unwrap();
        let s = |o: f64, a: f64| PredictionSet {
            overall: Prediction::Scalar(o),
            aspects: vec![Prediction::Scalar(a)],
        };
        let preds = vec![s(3.0, 1.0), s(3.0, 3.0)];
        let golds = vec![targets(3.0, &[1.0]), targets(3.0, &[3.0])];
        let r = regression_metrics(&preds, &golds, &set).unwrap();
        assert_eq!(r.targets[0].r2, None);
        assert_eq!(r.targets[1].r2, Some(1.0));
        assert_eq!(r.avg_aspect_mse, 0.0);
        let text = r.to_text();
        assert!(text.contains("overall.r2: undefined"), "{text}");
        assert!(text.contains("avg_aspect.r2: 1.000000"), "{text}");
        assert_eq!(r.to_flat_json()["overall.r2"], Value::Null);
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Some(0.0));
        assert_eq!(r_squared(&[1.0], &[1.0]), None);
    }

    #[test]
    fn attribution_accuracy_skips_unlabeled() {
        use SentenceLabel::*;
        let pred = [Aspect(0), Aspect(1), None, Aspect(0)];
        let gold = [Aspect(0), Aspect(0), Unlabeled, Aspect(0)];
        let acc = attribution_accuracy(&pred, &gold).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        assert!(attribution_accuracy(&[None], &[Unlabeled]).is_err());
        assert!(attribution_accuracy(&[None], &[]).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohen_kappa(&[1, 2, 1, 2], &[1, 2, 1, 2]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&["x"; 4], &["x"; 4]).unwrap(), 1.0);
        // p_o = 0.5, p_e = 0.5
        assert_eq!(cohen_kappa(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), 0.0);
        let k = cohen_kappa(&[1, 1, 1, 2, 2], &[1, 1, 2, 2, 2]).unwrap();
        // p_o = 0.8, p_e = 0.6*0.4 + 0.4*0.6 = 0.48
        assert!((k - (0.8 - 0.48) / 0.52).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_error() {
        let set = AspectSet::new(["a"]).unwrap();
        assert!(regression_metrics(&[], &[], &set).is_err());
        let p = PredictionSet {
            overall: Prediction::Scalar(1.0),
            aspects: vec![],
        };
        assert!(regression_metrics(&[p], &[targets(1.0, &[1.0])], &set).is_err());
    }
}
