//! Encoder + head bundled with its parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{Encoder, EncoderConfig, SentenceEmbeddings};
use crate::error::{Error, Result};
use crate::heads::{
    AttributionResult, Head, HeadConfig, HeadOutput, MaskMode, PredictionSet, Variant,
};
use crate::tensor::{Graph, ParamStore};
use crate::text::{make_batch, AspectSet, PaddedDoc, ReviewDocument};

fn default_classes() -> usize {
    5
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_s_max() -> usize {
    20
}

fn default_t_max() -> usize {
    64
}

/// Architecture choices independent of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mask_mode: MaskMode,
    #[serde(default = "default_s_max")]
    pub s_max: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
}

impl Architecture {
    pub fn new(variant: Variant, encoder: EncoderConfig) -> Self {
        Self {
            variant,
            encoder,
            num_classes: default_classes(),
            epsilon: default_epsilon(),
            mask_mode: MaskMode::Hard,
            s_max: default_s_max(),
            t_max: default_t_max(),
        }
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub aspects: AspectSet,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn head_config(&self) -> HeadConfig {
        let arch = &self.architecture;
        HeadConfig {
            variant: arch.variant,
            num_aspects: self.aspects.len(),
            num_classes: arch.num_classes,
            s_max: arch.s_max,
            feature_dim: arch.encoder.feature_dim(),
            epsilon: arch.epsilon,
            mask_mode: arch.mask_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(
                "vocabulary must contain the reserved tokens".into(),
            ));
        }
        if self.architecture.t_max == 0 {
            return Err(Error::Config("t_max must be positive".into()));
        }
        self.architecture.encoder.validate()?;
        self.head_config().validate()
    }
}

#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub embeddings: SentenceEmbeddings,
    pub head: HeadOutput,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    head: Head,
}

impl Model {
    /// Fresh model with seeded initialisation.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::init(
            config.architecture.encoder.clone(),
            config.vocab_size,
            &mut params,
            &mut rng,
        )?;
        let head = Head::init(config.head_config(), &mut params, &mut rng)?;
        Ok(Self {
            config,
            params,
            encoder,
            head,
        })
    }

    /// Rebuilds a model around existing parameters (e.g. from a checkpoint).
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::bind(
            config.architecture.encoder.clone(),
            config.vocab_size,
            &params,
        )?;
        let head = Head::bind(config.head_config(), &params)?;
        Ok(Self {
            config,
            params,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.architecture.variant
    }

    pub fn aspects(&self) -> &AspectSet {
        &self.config.aspects
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    /// Builds the forward graph for one padded document. The graph must
    /// borrow this model's parameters.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        doc: PaddedDoc<'_>,
        dropout_rng: Option<&mut R>,
    ) -> Result<ModelOutput> {
        let embeddings = self.encoder.encode_document(g, doc, dropout_rng)?;
        let head = self
            .head
            .forward(g, embeddings.values, &embeddings.sentence_mask)?;
        Ok(ModelOutput { embeddings, head })
    }

    /// Inference on one document.
    pub fn predict(
        &self,
        doc: &ReviewDocument,
    ) -> Result<(PredictionSet, Option<AttributionResult>)> {
        let arch = &self.config.architecture;
        let batch = make_batch(&[doc], arch.s_max, arch.t_max);
        let mut g = Graph::new(&self.params);
        let out = self.forward::<ChaCha8Rng>(&mut g, batch.doc(0), None)?;
        Ok((out.head.predictions(&g), out.head.attribution(&g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderKind;
    use crate::text::Vocabulary;

    fn toy_doc(n: usize) -> ReviewDocument {
        let sentences: Vec<Vec<u32>> = (0..n).map(|i| vec![2 + i as u32 % 5, 3]).collect();
        ReviewDocument {
            doc_id: "t".into(),
            sentence_texts: vec!["x".into(); n],
            sentences,
            overall_rating: 4.0,
            aspect_ratings: vec![4.0, 2.0],
            sentence_labels: None,
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::build(
            ["a", "b", "c", "d", "e", "f", "g", "h"]
                .iter()
                .map(|s| s.to_string()),
            1,
        )
    }

    fn config(variant: Variant, kind: EncoderKind) -> ModelConfig {
        let encoder = match kind {
            EncoderKind::Mean => EncoderConfig::mean(6),
            EncoderKind::Cnn => EncoderConfig::cnn(6, vec![2, 3], 4),
            EncoderKind::Gru => EncoderConfig::gru(6, 5),
        };
        ModelConfig {
            architecture: Architecture {
                s_max: 4,
                t_max: 6,
                ..Architecture::new(variant, encoder)
            },
            aspects: AspectSet::new(["room", "service"]).unwrap(),
            vocab_size: vocab().len(),
        }
    }

    #[test]
    fn predict_all_combinations() {
        for variant in Variant::ALL {
            for kind in [EncoderKind::Mean, EncoderKind::Cnn, EncoderKind::Gru] {
                let model = Model::new(config(variant, kind), 1).unwrap();
                let (pred, attr) = model.predict(&toy_doc(3)).unwrap();
                assert_eq!(pred.aspects.len(), 2);
                assert_eq!(attr.is_some(), variant.has_attribution());
                if let Some(a) = attr {
                    assert_eq!(a.num_sentences(), 3);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_params_and_rebind() {
        let a = Model::new(config(Variant::C1, EncoderKind::Cnn), 4).unwrap();
        let b = Model::new(config(Variant::C1, EncoderKind::Cnn), 4).unwrap();
        for ((_, _, x), (_, _, y)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(x, y);
        }
        let rebound = Model::from_params(a.config().clone(), a.params().clone()).unwrap();
        let doc = toy_doc(2);
        assert_eq!(rebound.predict(&doc).unwrap(), a.predict(&doc).unwrap());
        let wrong = config(Variant::R, EncoderKind::Cnn);
        assert!(Model::from_params(wrong, a.into_params()).is_err());
    }

    #[test]
    fn padding_slots_do_not_change_hard_outputs() {
        let model = Model::new(config(Variant::C1, EncoderKind::Gru), 2).unwrap();
        let doc = toy_doc(2);
        let mut wider = model.config().clone();
        wider.architecture.t_max = 12;
        let wide = Model::from_params(wider, model.params().clone()).unwrap();
        assert_eq!(model.predict(&doc).unwrap(), wide.predict(&doc).unwrap());
    }
}
