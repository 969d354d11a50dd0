//! Sentence encoders producing the per-sentence feature matrix.
//!
//! All three encoders read only the unmasked tokens of a sentence, so
//! trailing padding never changes their output. Parameters are registered
//! once and shared by every sentence of every document.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{self, Init, ParamSpec};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::text::PaddedDoc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Convolution + relu + max-over-time per filter width.
    Cnn,
    /// Final hidden state of a GRU over the real tokens.
    Gru,
    /// Mean of token embeddings.
    Mean,
}

fn default_widths() -> Vec<usize> {
    vec![3, 4, 5]
}

fn default_filters() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub embedding_dim: usize,
    #[serde(default = "default_widths")]
    pub filter_widths: Vec<usize>,
    #[serde(default = "default_filters")]
    pub filters_per_width: usize,
    /// GRU state size; defaults to `embedding_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<usize>,
    /// Dropout on CNN sentence features during training.
    #[serde(default)]
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn mean(embedding_dim: usize) -> Self {
        Self {
            kind: EncoderKind::Mean,
            embedding_dim,
            filter_widths: default_widths(),
            filters_per_width: default_filters(),
            hidden_size: None,
            dropout: 0.0,
        }
    }

    pub fn cnn(embedding_dim: usize, filter_widths: Vec<usize>, filters_per_width: usize) -> Self {
        Self {
            kind: EncoderKind::Cnn,
            filter_widths,
            filters_per_width,
            ..Self::mean(embedding_dim)
        }
    }

    pub fn gru(embedding_dim: usize, hidden_size: usize) -> Self {
        Self {
            kind: EncoderKind::Gru,
            hidden_size: Some(hidden_size),
            ..Self::mean(embedding_dim)
        }
    }

    /// Width `d` of a sentence feature vector.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Cnn => self.filter_widths.len() * self.filters_per_width,
            EncoderKind::Gru => self.hidden_size.unwrap_or(self.embedding_dim),
            EncoderKind::Mean => self.embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.kind == EncoderKind::Cnn {
            let w = &self.filter_widths;
            if w.is_empty() || w.contains(&0) || self.filters_per_width == 0 {
                return Err(Error::Config(
                    "cnn needs positive filter widths and filters_per_width".into(),
                ));
            }
            if (1..w.len()).any(|i| w[..i].contains(&w[i])) {
                return Err(Error::Config("duplicate cnn filter width".into()));
            }
        }
        if self.feature_dim() == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        Ok(())
    }

    fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    fn param_specs(&self, vocab_size: usize) -> Vec<ParamSpec> {
        let e = self.embedding_dim;
        let mut specs = vec![ParamSpec {
            name: "embedding".into(),
            shape: vec![vocab_size, e],
            init: Init::Embedding,
        }];
        match self.kind {
            EncoderKind::Mean => {}
            EncoderKind::Cnn => {
                for &w in &self.filter_widths {
                    specs.push(ParamSpec::xavier(
                        format!("cnn.w{w}"),
                        w * e,
                        self.filters_per_width,
                    ));
                    specs.push(ParamSpec::zeros(
                        format!("cnn.b{w}"),
                        &[self.filters_per_width],
                    ));
                }
            }
            EncoderKind::Gru => {
                let h = self.feature_dim();
                specs.push(ParamSpec::xavier("gru.w_x", e, 3 * h));
                specs.push(ParamSpec::zeros("gru.b", &[3 * h]));
                specs.push(ParamSpec::xavier("gru.u_zr", h, 2 * h));
                specs.push(ParamSpec::xavier("gru.u_h", h, h));
            }
        }
        specs
    }
}

/// Encoder per-sentence outputs for one document: `[slots, d]` with zero
/// rows for masked slots.
#[derive(Clone, Debug)]
pub struct SentenceEmbeddings {
    pub values: Var,
    pub sentence_mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    ids: Vec<ParamId>,
}

impl Encoder {
    /// Registers freshly initialised parameters.
    pub fn init<R: Rng>(
        config: EncoderConfig,
        vocab_size: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let ids = params::register(&config.param_specs(vocab_size), store, rng)?;
        Ok(Self { config, ids })
    }

    /// Binds to parameters already present in `store`.
    pub fn bind(config: EncoderConfig, vocab_size: usize, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let ids = params::bind(&config.param_specs(vocab_size), store)?;
        Ok(Self { config, ids })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    fn zeros(&self, g: &mut Graph<'_>) -> Result<Var> {
        g.constant(Tensor::zeros(&[self.feature_dim()]))
    }

    /// Encodes one sentence given its real token ids. `dropout_rng` enables
    /// training-time dropout (CNN only).
    pub fn encode_sentence<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        tokens: &[usize],
        dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        match self.config.kind {
            EncoderKind::Mean => self.encode_mean(g, tokens),
            EncoderKind::Gru => self.encode_gru(g, tokens),
            EncoderKind::Cnn => self.encode_cnn(g, tokens, dropout_rng),
        }
    }

    pub fn encode_mean(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Result<Var> {
        if tokens.is_empty() {
            return self.zeros(g);
        }
        let table = g.param(self.ids[0]);
        let emb = g.embedding_lookup(table, tokens)?;
        g.mean(emb, 0)
    }

    pub fn encode_cnn<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        tokens: &[usize],
        dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        if tokens.is_empty() {
            return self.zeros(g);
        }
        let table = g.param(self.ids[0]);
        let mut emb = g.embedding_lookup(table, tokens)?;
        // short sentences are zero-padded so every filter has one window
        let max_w = self.config.max_width();
        if tokens.len() < max_w {
            emb = g.pad_rows(emb, max_w)?;
        }
        let mut pooled = Vec::with_capacity(self.config.filter_widths.len());
        for (k, &w) in self.config.filter_widths.iter().enumerate() {
            let weight = g.param(self.ids[1 + 2 * k]);
            let bias = g.param(self.ids[2 + 2 * k]);
            let windows = g.unfold(emb, w)?;
            let conv = g.matmul(windows, weight)?;
            let conv = g.add_bias(conv, bias)?;
            let act = g.relu(conv)?;
            pooled.push(g.max(act, 0)?);
        }
        let features = g.concat(&pooled)?;
        match dropout_rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let mask: Vec<f64> = (0..self.feature_dim())
                    .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = g.constant(Tensor::vector(mask))?;
                g.mul(features, mask)
            }
            _ => Ok(features),
        }
    }

    pub fn encode_gru(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Result<Var> {
        if tokens.is_empty() {
            return self.zeros(g);
        }
        let h_dim = self.feature_dim();
        let table = g.param(self.ids[0]);
        let w_x = g.param(self.ids[1]);
        let b = g.param(self.ids[2]);
        let u_zr = g.param(self.ids[3]);
        let u_h = g.param(self.ids[4]);

        let emb = g.embedding_lookup(table, tokens)?;
        let xw = g.matmul(emb, w_x)?;
        let xw = g.add_bias(xw, b)?;
        let mut h = g.constant(Tensor::zeros(&[1, h_dim]))?;
        for t in 0..tokens.len() {
            let x_t = g.slice_rows(xw, t, t + 1)?;
            let h_zr = g.matmul(h, u_zr)?;

            let xz = g.narrow(x_t, 0, h_dim)?;
            let hz = g.narrow(h_zr, 0, h_dim)?;
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z)?;

            let xr = g.narrow(x_t, h_dim, h_dim)?;
            let hr = g.narrow(h_zr, h_dim, h_dim)?;
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r)?;

            let rh = g.mul(r, h)?;
            let rh_u = g.matmul(rh, u_h)?;
            let xh = g.narrow(x_t, 2 * h_dim, h_dim)?;
            let cand = g.add(xh, rh_u)?;
            let cand = g.tanh(cand)?;

            // h <- h + z * (cand - h)
            let delta = g.sub(cand, h)?;
            let step = g.mul(z, delta)?;
            h = g.add(h, step)?;
        }
        g.reshape(h, &[h_dim])
    }

    /// Encodes every sentence slot of a padded document. Masked slots give
    /// zero rows.
    pub fn encode_document<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        doc: PaddedDoc<'_>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<SentenceEmbeddings> {
        let mut rows = Vec::with_capacity(doc.s_max);
        for s in 0..doc.s_max {
            let row = if doc.sentence_mask[s] {
                let tokens = doc.real_tokens(s);
                self.encode_sentence(g, &tokens, dropout_rng.as_deref_mut())?
            } else {
                self.zeros(g)?
            };
            rows.push(row);
        }
        Ok(SentenceEmbeddings {
            values: g.stack_rows(&rows)?,
            sentence_mask: doc.sentence_mask.to_vec(),
        })
    }
}
