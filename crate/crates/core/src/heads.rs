//! Rating heads on top of the sentence feature matrix `u`.
//!
//! The attribution heads give every sentence an aspect distribution and a
//! rating score, and pool `aspect ⊗ score` over sentences into per-aspect
//! ratings. The flat heads are document-level baselines with one linear
//! layer per target over the flattened `u`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{self, ParamSpec};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::text::SentenceLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Classification; overall rating from a dense layer over all sentences.
    #[serde(rename = "C1")]
    C1,
    /// Classification; overall rating pooled through an extra attribution slot.
    #[serde(rename = "C2")]
    C2,
    /// Regression with normalised pooling.
    #[serde(rename = "R")]
    R,
    /// Classification baseline without sentence attribution.
    #[serde(rename = "flat-c")]
    FlatC,
    /// Regression baseline without sentence attribution.
    #[serde(rename = "flat-r")]
    FlatR,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::C1, Self::C2, Self::R, Self::FlatC, Self::FlatR];

    pub fn name(self) -> &'static str {
        match self {
            Self::C1 => "C1",
            Self::C2 => "C2",
            Self::R => "R",
            Self::FlatC => "flat-c",
            Self::FlatR => "flat-r",
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Self::C1 | Self::C2 | Self::FlatC)
    }

    pub fn has_attribution(self) -> bool {
        matches!(self, Self::C1 | Self::C2 | Self::R)
    }

    /// Number of slots in a sentence's aspect distribution.
    pub fn attribution_slots(self, num_aspects: usize) -> usize {
        match self {
            Self::C2 => num_aspects + 2,
            _ => num_aspects + 1,
        }
    }

    /// Label of attribution slot `j`.
    pub fn slot_label(self, j: usize, num_aspects: usize) -> SentenceLabel {
        match (self, j.cmp(&num_aspects)) {
            (_, std::cmp::Ordering::Less) => SentenceLabel::Aspect(j),
            (Self::C2, std::cmp::Ordering::Equal) => SentenceLabel::Overall,
            _ => SentenceLabel::None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// How padded sentence slots enter the head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Only real sentences are read; padding cannot change any output.
    #[default]
    Hard,
    /// All `s_max` slots are read, padding rows included.
    Soft,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub variant: Variant,
    pub num_aspects: usize,
    pub num_classes: usize,
    pub s_max: usize,
    pub feature_dim: usize,
    pub epsilon: f64,
    pub mask_mode: MaskMode,
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_aspects == 0 || self.s_max == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "num_aspects, s_max and feature_dim must be positive".into(),
            ));
        }
        if self.variant.is_classification() && self.num_classes < 2 {
            return Err(Error::Config(
                "classification needs at least 2 classes".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be a positive number".into()));
        }
        Ok(())
    }

    /// Width of a per-target output: classes, or 1 for regression.
    fn out_dim(&self) -> usize {
        if self.variant.is_classification() {
            self.num_classes
        } else {
            1
        }
    }

    fn param_specs(&self) -> Vec<ParamSpec> {
        let (d, a, c) = (self.feature_dim, self.num_aspects, self.out_dim());
        let flat = self.s_max * d;
        let slots = self.variant.attribution_slots(a);
        match self.variant {
            Variant::FlatC | Variant::FlatR => vec![
                ParamSpec::xavier("flat.w", flat, (a + 1) * c),
                ParamSpec::zeros("flat.b", &[(a + 1) * c]),
            ],
            v => {
                let mut specs = Vec::new();
                if v != Variant::C2 {
                    specs.push(ParamSpec::xavier("head.w_o", flat, c));
                    specs.push(ParamSpec::zeros("head.b_o", &[c]));
                }
                specs.push(ParamSpec::xavier("head.w_a", d, c));
                specs.push(ParamSpec::zeros("head.b_a", &[c]));
                specs.push(ParamSpec::xavier("head.w_r", d, slots));
                specs.push(ParamSpec::zeros("head.b_r", &[slots]));
                specs
            }
        }
    }
}

/// Graph handles to the attribution intermediates of one document.
#[derive(Clone, Debug)]
pub struct AttributionVars {
    /// `[n, slots]` aspect distribution per sentence.
    pub aspect_dist: Var,
    /// `[n, C]` (or `[n, 1]`) rating scores per sentence.
    pub rating_scores: Var,
    /// Per sentence `[slots, C]` outer products.
    pub scaled_scores: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub variant: Variant,
    /// Class distribution `[C]` or a single scalar.
    pub overall: Var,
    pub aspects: Vec<Var>,
    pub attribution: Option<AttributionVars>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Distribution(Vec<f64>),
    Scalar(f64),
}

impl Prediction {
    /// Predicted rating: argmax class (1-based, lowest index on ties) or the
    /// scalar itself.
    pub fn rating(&self) -> f64 {
        match self {
            Self::Distribution(p) => (argmax(p) + 1) as f64,
            Self::Scalar(v) => *v,
        }
    }

    /// Probability-weighted rating for distributions.
    pub fn expected_rating(&self) -> f64 {
        match self {
            Self::Distribution(p) => p.iter().enumerate().map(|(k, q)| (k + 1) as f64 * q).sum(),
            Self::Scalar(v) => *v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub overall: Prediction,
    pub aspects: Vec<Prediction>,
}

/// Plain values of the attribution intermediates for one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub variant: Variant,
    pub num_aspects: usize,
    pub aspect_dist: Vec<Vec<f64>>,
    pub rating_scores: Vec<Vec<f64>>,
    pub scaled_scores: Vec<Vec<Vec<f64>>>,
}

impl AttributionResult {
    pub fn num_sentences(&self) -> usize {
        self.aspect_dist.len()
    }

    /// Total attribution weight per slot, summed over sentences.
    pub fn aspect_mass(&self) -> Vec<f64> {
        let slots = self.aspect_dist.first().map_or(0, Vec::len);
        (0..slots)
            .map(|j| self.aspect_dist.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// Aspects whose total weight falls below `threshold`. Their pooled
    /// regression ratings are dominated by the epsilon guard.
    pub fn low_attribution_aspects(&self, threshold: f64) -> Vec<usize> {
        self.aspect_mass()
            .iter()
            .take(self.num_aspects)
            .enumerate()
            .filter(|(_, m)| **m < threshold)
            .map(|(j, _)| j)
            .collect()
    }

    /// Most probable slot per sentence (lowest index on ties) with its
    /// probability.
    pub fn sentence_labels(&self) -> Vec<(SentenceLabel, f64)> {
        self.aspect_dist
            .iter()
            .map(|row| {
                let j = argmax(row);
                (self.variant.slot_label(j, self.num_aspects), row[j])
            })
            .collect()
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

enum Ids {
    Flat {
        w: ParamId,
        b: ParamId,
    },
    Attr {
        out: Option<(ParamId, ParamId)>,
        w_a: ParamId,
        b_a: ParamId,
        w_r: ParamId,
        b_r: ParamId,
    },
}

#[derive(Clone, Debug)]
pub struct Head {
    config: HeadConfig,
    ids: Vec<ParamId>,
}

fn real_prefix(mask: &[bool]) -> Result<usize> {
    let n = mask.iter().take_while(|m| **m).count();
    if mask[n..].iter().any(|m| *m) {
        return Err(Error::dim(
            "head",
            "sentence mask must be a prefix of real sentences",
        ));
    }
    Ok(n)
}

impl Head {
    pub fn init<R: Rng>(config: HeadConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let ids = params::register(&config.param_specs(), store, rng)?;
        Ok(Self { config, ids })
    }

    pub fn bind(config: HeadConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let ids = params::bind(&config.param_specs(), store)?;
        Ok(Self { config, ids })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    fn ids(&self) -> Ids {
        let i = &self.ids;
        match self.config.variant {
            Variant::FlatC | Variant::FlatR => Ids::Flat { w: i[0], b: i[1] },
            Variant::C2 => Ids::Attr {
                out: None,
                w_a: i[0],
                b_a: i[1],
                w_r: i[2],
                b_r: i[3],
            },
            _ => Ids::Attr {
                out: Some((i[0], i[1])),
                w_a: i[2],
                b_a: i[3],
                w_r: i[4],
                b_r: i[5],
            },
        }
    }

    /// Dense layer over the first `n` sentence rows, flattened row-major.
    fn dense(&self, g: &mut Graph<'_>, flat: Var, w: ParamId, b: ParamId, n: usize) -> Result<Var> {
        let width = self.config.s_max * self.config.feature_dim;
        let w = g.param(w);
        let w = if n * self.config.feature_dim == width {
            w
        } else {
            g.slice_rows(w, 0, n * self.config.feature_dim)?
        };
        let b = g.param(b);
        let z = g.matmul(flat, w)?;
        let cols = g.shape(z)[1];
        let z = g.reshape(z, &[cols])?;
        g.add(z, b)
    }

    /// Runs the head on `u` (`[rows, d]`, rows >= real sentences) given the
    /// sentence mask, whose true entries must form a prefix.
    pub fn forward(&self, g: &mut Graph<'_>, u: Var, sentence_mask: &[bool]) -> Result<HeadOutput> {
        let cfg = &self.config;
        let shape = g.shape(u).to_vec();
        if shape.len() != 2 || shape[1] != cfg.feature_dim {
            return Err(Error::Shape {
                op: "head",
                lhs: vec![cfg.s_max, cfg.feature_dim],
                rhs: shape,
            });
        }
        let n_real = real_prefix(sentence_mask)?;
        if n_real == 0 {
            return Err(Error::Data("document has no sentences".into()));
        }
        if n_real > cfg.s_max || n_real > shape[0] {
            return Err(Error::dim(
                "head",
                format!(
                    "{n_real} real sentences exceed s_max {} or rows {}",
                    cfg.s_max, shape[0]
                ),
            ));
        }
        let n = match cfg.mask_mode {
            MaskMode::Hard => n_real,
            MaskMode::Soft => cfg.s_max,
        };
        let u = match shape[0].cmp(&n) {
            std::cmp::Ordering::Less => g.pad_rows(u, n)?,
            std::cmp::Ordering::Equal => u,
            std::cmp::Ordering::Greater => g.slice_rows(u, 0, n)?,
        };
        let (a, c) = (cfg.num_aspects, cfg.out_dim());
        let flat = g.reshape(u, &[1, n * cfg.feature_dim])?;

        let (w_a, b_a, w_r, b_r, out) = match self.ids() {
            Ids::Flat { w, b } => {
                let z = self.dense(g, flat, w, b, n)?;
                let (overall, aspects) = if cfg.variant == Variant::FlatC {
                    let z = g.reshape(z, &[a + 1, c])?;
                    let p = g.softmax(z)?;
                    let rows = (0..=a)
                        .map(|j| g.select(p, j))
                        .collect::<Result<Vec<_>>>()?;
                    (rows[0], rows[1..].to_vec())
                } else {
                    let rows = (0..=a)
                        .map(|j| g.narrow(z, j, 1))
                        .collect::<Result<Vec<_>>>()?;
                    (rows[0], rows[1..].to_vec())
                };
                return Ok(HeadOutput {
                    variant: cfg.variant,
                    overall,
                    aspects,
                    attribution: None,
                });
            }
            Ids::Attr {
                out,
                w_a,
                b_a,
                w_r,
                b_r,
            } => (w_a, b_a, w_r, b_r, out),
        };

        let (w_a, b_a) = (g.param(w_a), g.param(b_a));
        let scores = g.matmul(u, w_a)?;
        let scores = g.add_bias(scores, b_a)?;
        let (w_r, b_r) = (g.param(w_r), g.param(b_r));
        let logits = g.matmul(u, w_r)?;
        let logits = g.add_bias(logits, b_r)?;
        let aspect_dist = g.softmax(logits)?;

        let mut scaled = Vec::with_capacity(n);
        let mut total: Option<Var> = None;
        for i in 0..n {
            let a_i = g.select(aspect_dist, i)?;
            let s_i = g.select(scores, i)?;
            let o = g.outer(a_i, s_i)?;
            scaled.push(o);
            total = Some(match total {
                Some(t) => g.add(t, o)?,
                None => o,
            });
        }
        let total = total.expect("at least one sentence");

        let (overall, aspects) = match cfg.variant {
            Variant::C1 => {
                let l = g.softmax(total)?;
                let aspects = (0..a).map(|j| g.select(l, j)).collect::<Result<Vec<_>>>()?;
                let (w_o, b_o) = out.expect("C1 has an overall layer");
                let z = self.dense(g, flat, w_o, b_o, n)?;
                (g.softmax(z)?, aspects)
            }
            Variant::C2 => {
                let l = g.softmax(total)?;
                let aspects = (0..a).map(|j| g.select(l, j)).collect::<Result<Vec<_>>>()?;
                (g.select(l, a)?, aspects)
            }
            _ => {
                let slots = a + 1;
                let pooled = g.reshape(total, &[slots])?;
                let mass = g.sum(aspect_dist, 0)?;
                let eps = g.constant(Tensor::scalar(cfg.epsilon))?;
                let denom = g.add(mass, eps)?;
                let l = g.div(pooled, denom)?;
                let aspects = (0..a)
                    .map(|j| g.narrow(l, j, 1))
                    .collect::<Result<Vec<_>>>()?;
                let (w_o, b_o) = out.expect("R has an overall layer");
                let z = self.dense(g, flat, w_o, b_o, n)?;
                (g.scale(z, 1.0 / n as f64)?, aspects)
            }
        };
        Ok(HeadOutput {
            variant: cfg.variant,
            overall,
            aspects,
            attribution: Some(AttributionVars {
                aspect_dist,
                rating_scores: scores,
                scaled_scores: scaled,
            }),
        })
    }
}

impl HeadOutput {
    pub fn predictions(&self, g: &Graph<'_>) -> PredictionSet {
        let read = |v: Var| {
            let t = g.value(v);
            if self.variant.is_classification() {
                Prediction::Distribution(t.data().to_vec())
            } else {
                Prediction::Scalar(t.data()[0])
            }
        };
        PredictionSet {
            overall: read(self.overall),
            aspects: self.aspects.iter().map(|v| read(*v)).collect(),
        }
    }

    pub fn attribution(&self, g: &Graph<'_>) -> Option<AttributionResult> {
        let attr = self.attribution.as_ref()?;
        Some(AttributionResult {
            variant: self.variant,
            num_aspects: self.aspects.len(),
            aspect_dist: g.value(attr.aspect_dist).to_rows(),
            rating_scores: g.value(attr.rating_scores).to_rows(),
            scaled_scores: attr
                .scaled_scores
                .iter()
                .map(|v| g.value(*v).to_rows())
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(variant: Variant, mask_mode: MaskMode) -> HeadConfig {
        HeadConfig {
            variant,
            num_aspects: 3,
            num_classes: 4,
            s_max: 4,
            feature_dim: 5,
            epsilon: 1e-8,
            mask_mode,
        }
    }

    fn setup(cfg: HeadConfig, seed: u64) -> (ParamStore, Head) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = Head::init(cfg, &mut store, &mut rng).unwrap();
        // non-zero biases so they are exercised
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).contains(".b") {
                for v in store.get_mut(id).data_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
        }
        (store, head)
    }

    fn features(rows: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(&[rows, d], 1.0, &mut rng)
    }

    fn run(
        store: &ParamStore,
        head: &Head,
        u: &Tensor,
        mask: &[bool],
    ) -> (PredictionSet, Option<AttributionResult>) {
        let mut g = Graph::new(store);
        let u = g.constant(u.clone()).unwrap();
        let out = head.forward(&mut g, u, mask).unwrap();
        (out.predictions(&g), out.attribution(&g))
    }

    // ---- loop-based oracle ------------------------------------------------

    fn p(store: &ParamStore, name: &str) -> Tensor {
        store.get(store.id(name).unwrap()).clone()
    }

    fn affine(x: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
        let cols = w.shape()[1];
        (0..cols)
            .map(|j| {
                b[j] + x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| xi * w.data()[i * cols + j])
                    .sum::<f64>()
            })
            .collect()
    }

    fn softmax(x: &[f64]) -> Vec<f64> {
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    fn oracle(store: &ParamStore, cfg: &HeadConfig, u: &Tensor, n: usize) -> PredictionSet {
        let a = cfg.num_aspects;
        let rows: Vec<&[f64]> = (0..n).map(|i| u.row(i)).collect();
        let flat: Vec<f64> = rows.concat();
        let dist: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                softmax(&affine(
                    r,
                    &p(store, "head.w_r"),
                    p(store, "head.b_r").data(),
                ))
            })
            .collect();
        let score: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| affine(r, &p(store, "head.w_a"), p(store, "head.b_a").data()))
            .collect();
        let slots = dist[0].len();
        let width = score[0].len();
        let mut pooled = vec![vec![0.0; width]; slots];
        for i in 0..n {
            for j in 0..slots {
                for k in 0..width {
                    pooled[j][k] += dist[i][j] * score[i][k];
                }
            }
        }
        let overall_dense = || {
            let w = p(store, "head.w_o");
            let cols = w.shape()[1];
            let w = Tensor::new(
                vec![flat.len(), cols],
                w.data()[..flat.len() * cols].to_vec(),
            )
            .unwrap();
            affine(&flat, &w, p(store, "head.b_o").data())
        };
        match cfg.variant {
            Variant::C1 => PredictionSet {
                overall: Prediction::Distribution(softmax(&overall_dense())),
                aspects: (0..a)
                    .map(|j| Prediction::Distribution(softmax(&pooled[j])))
                    .collect(),
            },
            Variant::C2 => PredictionSet {
                overall: Prediction::Distribution(softmax(&pooled[a])),
                aspects: (0..a)
                    .map(|j| Prediction::Distribution(softmax(&pooled[j])))
                    .collect(),
            },
            Variant::R => PredictionSet {
                overall: Prediction::Scalar(overall_dense()[0] / n as f64),
                aspects: (0..a)
                    .map(|j| {
                        let mass: f64 = dist.iter().map(|d| d[j]).sum();
                        Prediction::Scalar(pooled[j][0] / (mass + cfg.epsilon))
                    })
                    .collect(),
            },
            _ => unreachable!(),
        }
    }

    fn flat_values(s: &PredictionSet) -> Vec<f64> {
        let mut out = Vec::new();
        for pr in std::iter::once(&s.overall).chain(&s.aspects) {
            match pr {
                Prediction::Distribution(d) => out.extend(d),
                Prediction::Scalar(v) => out.push(*v),
            }
        }
        out
    }

    #[test]
    fn forward_matches_loop_oracle() {
        for variant in [Variant::C1, Variant::C2, Variant::R] {
            for (mode, n) in [(MaskMode::Hard, 2), (MaskMode::Soft, 4)] {
                let cfg = config(variant, mode);
                let (store, head) = setup(cfg.clone(), 3);
                let mut u = features(4, 5, 9);
                u.data_mut()[2 * 5..].fill(0.0);
                let (pred, _) = run(&store, &head, &u, &[true, true, false, false]);
                let want = oracle(&store, &cfg, &u, n);
                for (x, y) in flat_values(&pred).iter().zip(flat_values(&want)) {
                    assert!((x - y).abs() < 1e-12, "{variant} {mode:?}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn attribution_shapes_and_outer_products() {
        for variant in [Variant::C1, Variant::C2, Variant::R] {
            let cfg = config(variant, MaskMode::Hard);
            let (store, head) = setup(cfg.clone(), 4);
            let u = features(4, 5, 1);
            let (pred, attr) = run(&store, &head, &u, &[true, true, true, false]);
            let attr = attr.unwrap();
            let slots = variant.attribution_slots(3);
            assert_eq!(attr.num_sentences(), 3);
            assert_eq!(pred.aspects.len(), 3);
            for i in 0..3 {
                assert_eq!(attr.aspect_dist[i].len(), slots);
                assert!((attr.aspect_dist[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..slots {
                    for (k, s) in attr.rating_scores[i].iter().enumerate() {
                        assert_eq!(attr.scaled_scores[i][j][k], attr.aspect_dist[i][j] * s);
                    }
                }
            }
            if variant.is_classification() {
                for pr in std::iter::once(&pred.overall).chain(&pred.aspects) {
                    let Prediction::Distribution(d) = pr else {
                        panic!()
                    };
                    assert_eq!(d.len(), 4);
                    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hard_mask_ignores_padding_bitwise() {
        for variant in Variant::ALL {
            let (store, head) = setup(config(variant, MaskMode::Hard), 8);
            let mut u = features(4, 5, 2);
            let mask = [true, true, false, false];
            let (a, _) = run(&store, &head, &u, &mask);
            u.data_mut()[10..].iter_mut().for_each(|v| *v = 1e3);
            let (b, _) = run(&store, &head, &u, &mask);
            assert_eq!(a, b, "{variant}");
        }
    }

    #[test]
    fn soft_mask_reads_padding() {
        let (store, head) = setup(config(Variant::R, MaskMode::Soft), 8);
        let mut u = features(4, 5, 2);
        let mask = [true, true, false, false];
        let (a, _) = run(&store, &head, &u, &mask);
        u.data_mut()[10..].iter_mut().for_each(|v| *v = 0.7);
        let (b, _) = run(&store, &head, &u, &mask);
        assert_ne!(a, b);
    }

    #[test]
    fn regression_pooling_with_zero_mass_is_finite() {
        let cfg = HeadConfig {
            num_aspects: 1,
            ..config(Variant::R, MaskMode::Hard)
        };
        let (mut store, head) = setup(cfg, 0);
        // all weight goes to the "none" slot
        let b_r = store.id("head.b_r").unwrap();
        store
            .get_mut(b_r)
            .data_mut()
            .copy_from_slice(&[-800.0, 800.0]);
        let w_r = store.id("head.w_r").unwrap();
        store.get_mut(w_r).data_mut().fill(0.0);
        let (pred, attr) = run(
            &store,
            &head,
            &features(4, 5, 0),
            &[true, false, false, false],
        );
        assert!(pred.aspects[0].rating().is_finite());
        assert_eq!(attr.unwrap().low_attribution_aspects(1e-3), vec![0]);
    }

    fn set(store: &mut ParamStore, name: &str, values: &[f64]) {
        let id = store.id(name).unwrap();
        store.get_mut(id).data_mut().copy_from_slice(values);
    }

    #[test]
    fn regression_weighted_average_examples() {
        let cfg = HeadConfig {
            num_aspects: 1,
            feature_dim: 2,
            s_max: 2,
            ..config(Variant::R, MaskMode::Hard)
        };
        let (mut store, head) = setup(cfg, 0);
        set(&mut store, "head.w_a", &[2.0, 4.0]);
        set(&mut store, "head.b_a", &[0.0]);
        set(&mut store, "head.b_r", &[0.0, 0.0]);
        let u = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        // sentence weights on aspect 1: {0.25, 0.75}
        let (l4, l3) = (0.75f64.ln(), 0.25f64.ln());
        set(&mut store, "head.w_r", &[l3, l4, l4, l3]);
        let (pred, _) = run(&store, &head, &u, &[true, true]);
        assert!((pred.aspects[0].rating() - 3.5).abs() < 1e-7);
        // forced selection of the first sentence
        set(&mut store, "head.w_r", &[400.0, -400.0, -400.0, 400.0]);
        let (pred, _) = run(&store, &head, &u, &[true, true]);
        assert!((pred.aspects[0].rating() - 2.0).abs() < 1e-7);
        // uniform attribution and equal scores c give c
        set(&mut store, "head.w_a", &[1.5, 1.5]);
        set(&mut store, "head.w_r", &[0.0; 4]);
        let (pred, _) = run(&store, &head, &u, &[true, true]);
        assert!((pred.aspects[0].rating() - 1.5).abs() < 1e-7);
    }

    #[test]
    fn extract_attribution_examples() {
        let attr = |row: Vec<f64>| AttributionResult {
            variant: Variant::R,
            num_aspects: 2,
            aspect_dist: vec![row],
            rating_scores: vec![vec![0.0]],
            scaled_scores: vec![],
        };
        let l = |row| attr(row).sentence_labels()[0];
        assert_eq!(l(vec![0.7, 0.2, 0.1]), (SentenceLabel::Aspect(0), 0.7));
        assert_eq!(l(vec![0.1, 0.1, 0.8]), (SentenceLabel::None, 0.8));
        assert_eq!(l(vec![0.5, 0.5, 0.0]), (SentenceLabel::Aspect(0), 0.5));
    }

    #[test]
    fn rejects_bad_masks() {
        let (store, head) = setup(config(Variant::C1, MaskMode::Hard), 0);
        let mut g = Graph::new(&store);
        let u = g.constant(features(4, 5, 0)).unwrap();
        assert!(head
            .forward(&mut g, u, &[true, false, true, false])
            .is_err());
        assert!(head.forward(&mut g, u, &[false; 4]).is_err());
        let bad = g.constant(features(4, 6, 0)).unwrap();
        assert!(head.forward(&mut g, bad, &[true; 4]).is_err());
    }

    #[test]
    fn slot_labels_and_argmax() {
        assert_eq!(Variant::C2.slot_label(3, 3), SentenceLabel::Overall);
        assert_eq!(Variant::C2.slot_label(4, 3), SentenceLabel::None);
        assert_eq!(Variant::C1.slot_label(3, 3), SentenceLabel::None);
        assert_eq!(Variant::R.slot_label(1, 3), SentenceLabel::Aspect(1));
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(Prediction::Distribution(vec![0.1, 0.6, 0.3]).rating(), 2.0);
        let e = Prediction::Distribution(vec![0.5, 0.0, 0.5]).expected_rating();
        assert!((e - 2.0).abs() < 1e-12);
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for variant in Variant::ALL {
            for mode in [MaskMode::Hard, MaskMode::Soft] {
                let cfg = config(variant, mode);
                let (mut store, head) = setup(cfg, 6);
                let u = features(4, 5, 3);
                let report = grad_check(
                    &mut store,
                    |g| {
                        let x = g.constant(u.clone())?;
                        let out = head.forward(g, x, &[true, true, true, false])?;
                        let mut loss = if variant.is_classification() {
                            g.cross_entropy(out.overall, 2)?
                        } else {
                            g.squared_error(out.overall, 3.0)?
                        };
                        for (j, v) in out.aspects.iter().enumerate() {
                            let term = if variant.is_classification() {
                                g.cross_entropy(*v, j % 4)?
                            } else {
                                g.squared_error(*v, 1.0 + j as f64)?
                            };
                            loss = g.add(loss, term)?;
                        }
                        Ok(loss)
                    },
                    &GradCheckConfig::default(),
                )
                .unwrap();
                assert!(
                    report.passed(),
                    "{variant} {mode:?}: {:?}",
                    report.failures()
                );
            }
        }
    }
}
