//! Mini-batch training with dev-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_var, LossWeights};
use super::optim::{Optimizer, OptimizerKind};
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::evaluation::rating_metrics;
use crate::model::{Architecture, Model, ModelConfig};
use crate::tensor::{GradStore, Graph};
use crate::text::{make_batch, AspectSet, PaddedBatch, ReviewDocument};

fn default_lr() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    32
}

fn default_epochs() -> usize {
    50
}

fn default_patience() -> usize {
    5
}

fn one() -> f64 {
    1.0
}

fn default_clip() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "one")]
    pub lambda_overall: f64,
    #[serde(default = "one")]
    pub lambda_aspect: f64,
    /// Global-norm clipping; on by default for the GRU encoder only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_gradients: Option<bool>,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
}

impl TrainConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            seed: 0,
            learning_rate: default_lr(),
            optimizer: OptimizerKind::Adam,
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            lambda_overall: 1.0,
            lambda_aspect: 1.0,
            clip_gradients: None,
            clip_norm: default_clip(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            overall: self.lambda_overall,
            aspect: self.lambda_aspect,
        }
    }

    /// Clip threshold in effect, if any.
    pub fn clip_threshold(&self) -> Option<f64> {
        let on = self
            .clip_gradients
            .unwrap_or(self.architecture.encoder.kind == EncoderKind::Gru);
        on.then_some(self.clip_norm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a non-negative number".into(),
            ));
        }
        if self.lambda_overall < 0.0 || self.lambda_aspect < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_avg_aspect_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_avg_aspect_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev loss.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
}

/// Accumulates the summed loss gradient of `docs` into `grads` and returns
/// the summed loss.
pub fn accumulate_gradients(
    model: &Model,
    batch: &PaddedBatch,
    docs: &[usize],
    weights: LossWeights,
    grads: &mut GradStore,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in docs {
        let mut g = Graph::new(model.params());
        let out = model.forward(&mut g, batch.doc(i), dropout_rng.as_deref_mut())?;
        let loss = loss_var(&mut g, &out.head, &batch.labels[i], weights)?;
        total += g.value(loss).data()[0];
        g.backward(loss, grads)?;
    }
    Ok(total)
}

/// Mean document loss without dropout.
pub fn mean_loss(model: &Model, batch: &PaddedBatch, weights: LossWeights) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..batch.len() {
        let mut g = Graph::new(model.params());
        let out = model.forward::<ChaCha8Rng>(&mut g, batch.doc(i), None)?;
        let loss = loss_var(&mut g, &out.head, &batch.labels[i], weights)?;
        total += g.value(loss).data()[0];
    }
    Ok(total / batch.len() as f64)
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } | Error::Numeric { .. } => Error::Divergence {
            epoch,
            batch,
            msg: e.to_string(),
        },
        other => other,
    }
}

pub fn train(
    cfg: &TrainConfig,
    aspects: &AspectSet,
    vocab_size: usize,
    train_docs: &[ReviewDocument],
    dev_docs: &[ReviewDocument],
) -> Result<TrainOutcome> {
    train_with(cfg, aspects, vocab_size, train_docs, dev_docs, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    cfg: &TrainConfig,
    aspects: &AspectSet,
    vocab_size: usize,
    train_docs: &[ReviewDocument],
    dev_docs: &[ReviewDocument],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let model_cfg = ModelConfig {
        architecture: cfg.architecture.clone(),
        aspects: aspects.clone(),
        vocab_size,
    };
    let mut model = Model::new(model_cfg, cfg.seed)?;
    let arch = &cfg.architecture;
    let train_refs: Vec<&ReviewDocument> = train_docs.iter().collect();
    let dev_refs: Vec<&ReviewDocument> = dev_docs.iter().collect();
    let train_batch = make_batch(&train_refs, arch.s_max, arch.t_max);
    let dev_batch = make_batch(&dev_refs, arch.s_max, arch.t_max);
    let dev_gold: Vec<_> = dev_batch.labels.clone();

    let weights = cfg.weights();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.params());
    let mut grads = GradStore::zeros_like(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let use_dropout = arch.encoder.dropout > 0.0;

    let mut order: Vec<usize> = (0..train_batch.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let wrap = diverged(epoch, b + 1);
            grads.zero();
            let loss = accumulate_gradients(
                &model,
                &train_batch,
                chunk,
                weights,
                &mut grads,
                use_dropout.then_some(&mut rng),
            )
            .map_err(&wrap)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    msg: "loss is not finite".into(),
                });
            }
            epoch_loss += loss;
            grads.scale(1.0 / chunk.len() as f64);
            if let Some(max) = cfg.clip_threshold() {
                grads.clip_global_norm(max);
            }
            optimizer.step(model.params_mut(), &grads);
            if model.params().iter().any(|(_, _, t)| !t.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    msg: "parameters became non-finite".into(),
                });
            }
        }
        let train_loss = epoch_loss / train_batch.len() as f64;
        let wrap = diverged(epoch, 0);

        let (dev_loss, dev_mse, dev_acc) = if dev_batch.is_empty() {
            (train_loss, f64::NAN, None)
        } else {
            let loss = mean_loss(&model, &dev_batch, weights).map_err(&wrap)?;
            let mut preds = Vec::with_capacity(dev_docs.len());
            for d in dev_docs {
                preds.push(model.predict(d).map_err(&wrap)?.0);
            }
            let report = rating_metrics(&preds, &dev_gold, aspects)?;
            (loss, report.avg_aspect_mse, report.avg_aspect_accuracy)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_avg_aspect_mse: dev_mse,
            dev_avg_aspect_accuracy: dev_acc,
        };
        on_epoch(&record);
        history.push(record);

        if dev_loss < best.0 {
            best = (dev_loss, epoch, model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_dev_loss, best_epoch, params) = best;
    let model = Model::from_params(model.config().clone(), params)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_dev_loss,
    })
}
