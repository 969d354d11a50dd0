//! Weighted document losses over overall and aspect ratings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadOutput, Prediction, PredictionSet};
use crate::tensor::{Graph, Var, LOG_CLAMP};
use crate::text::RatingTargets;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub overall: f64,
    pub aspect: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            overall: 1.0,
            aspect: 1.0,
        }
    }
}

/// Class index of an integer rating in `1..=num_classes`.
pub fn rating_class(rating: f64, num_classes: usize) -> Result<usize> {
    if rating.fract() != 0.0 || rating < 1.0 || rating > num_classes as f64 {
        return Err(Error::Data(format!(
            "rating {rating} is outside the class domain 1..={num_classes}"
        )));
    }
    Ok(rating as usize - 1)
}

fn check_aspects(n: usize, targets: &RatingTargets) -> Result<()> {
    if n != targets.aspects.len() {
        return Err(Error::Data(format!(
            "{n} predicted aspects but {} targets",
            targets.aspects.len()
        )));
    }
    Ok(())
}

/// Graph loss `λ_o·L(overall) + λ_a·Σ_j L(aspect_j)` with cross-entropy for
/// class distributions and squared error for scalars.
pub fn loss_var(
    g: &mut Graph<'_>,
    out: &HeadOutput,
    targets: &RatingTargets,
    weights: LossWeights,
) -> Result<Var> {
    check_aspects(out.aspects.len(), targets)?;
    let classification = out.variant.is_classification();
    let term = |g: &mut Graph<'_>, v: Var, rating: f64| -> Result<Var> {
        if classification {
            let classes = g.shape(v)[0];
            g.cross_entropy(v, rating_class(rating, classes)?)
        } else {
            g.squared_error(v, rating)
        }
    };
    let overall = term(g, out.overall, targets.overall)?;
    let overall = g.scale(overall, weights.overall)?;
    let mut aspects: Option<Var> = None;
    for (v, r) in out.aspects.iter().zip(&targets.aspects) {
        let t = term(g, *v, *r)?;
        aspects = Some(match aspects {
            Some(acc) => g.add(acc, t)?,
            None => t,
        });
    }
    match aspects {
        Some(a) => {
            let a = g.scale(a, weights.aspect)?;
            g.add(overall, a)
        }
        None => Ok(overall),
    }
}

fn ce(p: &[f64], rating: f64) -> Result<f64> {
    let k = rating_class(rating, p.len())?;
    Ok(-p[k].max(LOG_CLAMP).ln())
}

/// Plain-value counterpart of [`loss_var`] for class distributions.
pub fn classification_loss(
    pred: &PredictionSet,
    targets: &RatingTargets,
    weights: LossWeights,
) -> Result<f64> {
    check_aspects(pred.aspects.len(), targets)?;
    let dist = |p: &Prediction| match p {
        Prediction::Distribution(d) => Ok(d.clone()),
        Prediction::Scalar(_) => Err(Error::Data(
            "classification loss needs distributions".into(),
        )),
    };
    let mut aspect = 0.0;
    for (p, r) in pred.aspects.iter().zip(&targets.aspects) {
        aspect += ce(&dist(p)?, *r)?;
    }
    Ok(weights.overall * ce(&dist(&pred.overall)?, targets.overall)? + weights.aspect * aspect)
}

/// Plain-value counterpart of [`loss_var`] for scalar predictions.
pub fn regression_loss(
    pred: &PredictionSet,
    targets: &RatingTargets,
    weights: LossWeights,
) -> Result<f64> {
    check_aspects(pred.aspects.len(), targets)?;
    let scalar = |p: &Prediction| match p {
        Prediction::Scalar(v) => Ok(*v),
        Prediction::Distribution(_) => Err(Error::Data("regression loss needs scalars".into())),
    };
    let mut aspect = 0.0;
    for (p, r) in pred.aspects.iter().zip(&targets.aspects) {
        aspect += (scalar(p)? - r).powi(2);
    }
    Ok(
        weights.overall * (scalar(&pred.overall)? - targets.overall).powi(2)
            + weights.aspect * aspect,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(overall: f64, aspects: &[f64]) -> RatingTargets {
        RatingTargets {
            overall,
            aspects: aspects.to_vec(),
        }
    }

    #[test]
    fn rating_domain() {
        assert_eq!(rating_class(1.0, 5).unwrap(), 0);
        assert_eq!(rating_class(5.0, 5).unwrap(), 4);
        assert!(rating_class(0.0, 5).is_err());
        assert!(rating_class(6.0, 5).is_err());
        assert!(rating_class(2.5, 5).is_err());
    }

    #[test]
    fn classification_example() {
        let p = PredictionSet {
            overall: Prediction::Distribution(vec![0.1, 0.2, 0.7]),
            aspects: vec![Prediction::Distribution(vec![0.5, 0.25, 0.25])],
        };
        let l = classification_loss(&p, &t(3.0, &[2.0]), LossWeights::default()).unwrap();
        assert!((l - (-(0.7f64).ln() - (0.25f64).ln())).abs() < 1e-12);
        let w = LossWeights {
            overall: 1.0,
            aspect: 0.0,
        };
        let l = classification_loss(&p, &t(3.0, &[2.0]), w).unwrap();
        assert!((l + (0.7f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn regression_example() {
        let p = PredictionSet {
            overall: Prediction::Scalar(3.5),
            aspects: vec![Prediction::Scalar(2.0), Prediction::Scalar(5.0)],
        };
        let w = LossWeights {
            overall: 2.0,
            aspect: 0.5,
        };
        let l = regression_loss(&p, &t(4.0, &[1.0, 5.0]), w).unwrap();
        assert!((l - (2.0 * 0.25 + 0.5 * 1.0)).abs() < 1e-12);
        assert!(regression_loss(&p, &t(4.0, &[1.0]), w).is_err());
    }
}
