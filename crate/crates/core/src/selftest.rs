//! Built-in verification suite: finite-difference checks of every tensor op
//! and every encoder/head pairing at toy sizes, plus a comparison of the
//! heads against a plain loop implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::EncoderConfig;
use crate::error::Result;
use crate::heads::{Head, HeadConfig, MaskMode, Prediction, PredictionSet, Variant};
use crate::model::{Architecture, Model, ModelConfig};
use crate::tensor::{grad_check, GradCheckConfig, Graph, ParamStore, Tensor, Var};
use crate::text::{make_batch, AspectSet, ReviewDocument};
use crate::training::{loss_var, LossWeights};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub detail: String,
}

impl CheckOutcome {
    pub fn render(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{status} {}/{} max_err={:.3e}",
            self.suite, self.name, self.max_error
        );
        if !self.detail.is_empty() {
            line.push_str(&format!(" ({})", self.detail));
        }
        line
    }
}

/// Reduces any tensor to a scalar through a fixed random projection.
fn project(g: &mut Graph<'_>, x: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let w = Tensor::uniform(&shape, 1.0, rng);
    let w = g.constant(w)?;
    let mut y = g.mul(x, w)?;
    while g.shape(y).len() > 1 {
        y = g.sum(y, 0)?;
    }
    if g.shape(y).len() == 1 {
        y = g.sum(y, 0)?;
    }
    Ok(y)
}

type OpCase = (
    &'static str,
    Vec<(&'static str, Vec<usize>)>,
    fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
);

fn op_cases() -> Vec<OpCase> {
    vec![
        (
            "matmul",
            vec![("a", vec![3, 4]), ("b", vec![4, 2])],
            |g, p| g.matmul(p[0], p[1]),
        ),
        ("softmax", vec![("x", vec![2, 5])], |g, p| g.softmax(p[0])),
        ("outer", vec![("u", vec![3]), ("v", vec![4])], |g, p| {
            g.outer(p[0], p[1])
        }),
        ("add", vec![("a", vec![2, 3]), ("b", vec![2, 3])], |g, p| {
            g.add(p[0], p[1])
        }),
        (
            "add_broadcast",
            vec![("a", vec![2, 3]), ("s", vec![1])],
            |g, p| g.add(p[0], p[1]),
        ),
        ("sub", vec![("a", vec![2, 3]), ("b", vec![2, 3])], |g, p| {
            g.sub(p[0], p[1])
        }),
        ("mul", vec![("a", vec![2, 3]), ("b", vec![2, 3])], |g, p| {
            g.mul(p[0], p[1])
        }),
        (
            "div",
            vec![("a", vec![2, 3]), ("pos", vec![2, 3])],
            |g, p| g.div(p[0], p[1]),
        ),
        ("tanh", vec![("x", vec![2, 3])], |g, p| g.tanh(p[0])),
        ("sigmoid", vec![("x", vec![2, 3])], |g, p| g.sigmoid(p[0])),
        ("relu", vec![("x", vec![2, 3])], |g, p| g.relu(p[0])),
        ("scale", vec![("x", vec![4])], |g, p| g.scale(p[0], -1.7)),
        ("sum", vec![("x", vec![3, 4])], |g, p| g.sum(p[0], 1)),
        ("mean", vec![("x", vec![3, 4])], |g, p| g.mean(p[0], 0)),
        ("max", vec![("x", vec![3, 4])], |g, p| g.max(p[0], 0)),
        ("embedding", vec![("table", vec![5, 3])], |g, p| {
            g.embedding_lookup(p[0], &[1, 3, 1])
        }),
        ("cross_entropy", vec![("logits", vec![4])], |g, p| {
            let d = g.softmax(p[0])?;
            g.cross_entropy(d, 2)
        }),
        ("squared_error", vec![("x", vec![1])], |g, p| {
            g.squared_error(p[0], 0.3)
        }),
        ("reshape", vec![("x", vec![2, 3])], |g, p| {
            g.reshape(p[0], &[3, 2])
        }),
        ("slice", vec![("x", vec![4, 3])], |g, p| {
            let rows = g.slice_rows(p[0], 1, 3)?;
            let r = g.select(rows, 1)?;
            let first = g.select(p[0], 0)?;
            g.mul(r, first)
        }),
        ("narrow", vec![("x", vec![2, 6])], |g, p| {
            g.narrow(p[0], 1, 3)
        }),
        ("concat", vec![("a", vec![2]), ("b", vec![3])], |g, p| {
            let c = g.concat(&[p[0], p[1], p[0]])?;
            let r = g.stack_rows(&[p[1], p[1]])?;
            let r = g.reshape(r, &[6])?;
            let r = g.sum(r, 0)?;
            g.mul(c, r)
        }),
        (
            "add_bias",
            vec![("x", vec![3, 4]), ("b", vec![4])],
            |g, p| g.add_bias(p[0], p[1]),
        ),
        ("unfold", vec![("x", vec![5, 2])], |g, p| g.unfold(p[0], 3)),
        ("pad_rows", vec![("x", vec![2, 3])], |g, p| {
            g.pad_rows(p[0], 4)
        }),
    ]
}

fn case_params(spec: &[(&'static str, Vec<usize>)], rng: &mut ChaCha8Rng) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, shape) in spec {
        let mut t = Tensor::uniform(shape, 1.0, rng);
        for v in t.data_mut() {
            if *name == "pos" {
                *v = 1.0 + v.abs();
            } else if v.abs() < 0.1 {
                // keep relu and max away from their kinks
                *v += 0.2f64.copysign(*v);
            }
        }
        store.add(*name, t)?;
    }
    Ok(store)
}

fn outcome(
    suite: &'static str,
    name: String,
    report: Result<crate::tensor::GradCheckReport>,
) -> CheckOutcome {
    match report {
        Ok(r) => CheckOutcome {
            suite,
            passed: r.passed(),
            max_error: r.max_rel_error(),
            detail: r.failures().join(", "),
            name,
        },
        Err(e) => CheckOutcome {
            suite,
            name,
            passed: false,
            max_error: f64::INFINITY,
            detail: e.to_string(),
        },
    }
}

/// One finite-difference check per differentiable op.
pub fn op_gradient_checks(cfg: &GradCheckConfig) -> Vec<CheckOutcome> {
    op_cases()
        .into_iter()
        .enumerate()
        .map(|(k, (name, spec, build))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + k as u64);
            let report = case_params(&spec, &mut rng).and_then(|mut store| {
                let proj_seed: u64 = rng.gen();
                grad_check(
                    &mut store,
                    |g| {
                        let vars: Vec<Var> = spec
                            .iter()
                            .map(|(n, _)| g.param_named(n))
                            .collect::<Result<_>>()?;
                        let out = build(g, &vars)?;
                        project(g, out, &mut ChaCha8Rng::seed_from_u64(proj_seed))
                    },
                    cfg,
                )
            });
            outcome("ops", name.to_string(), report)
        })
        .collect()
}

/// Toy dimensions: features 8, `s_max` 4, two aspects, three classes.
pub fn toy_encoders() -> Vec<(&'static str, EncoderConfig)> {
    vec![
        ("mean", EncoderConfig::mean(8)),
        ("cnn", EncoderConfig::cnn(5, vec![2, 3], 4)),
        ("gru", EncoderConfig::gru(5, 8)),
    ]
}

fn toy_document(rng: &mut ChaCha8Rng, vocab_size: usize, sentences: usize) -> ReviewDocument {
    let sents: Vec<Vec<u32>> = (0..sentences)
        .map(|_| {
            let len = rng.gen_range(1..=5);
            (0..len)
                .map(|_| rng.gen_range(2..vocab_size as u32))
                .collect()
        })
        .collect();
    ReviewDocument {
        doc_id: "toy".into(),
        sentence_texts: vec![String::new(); sentences],
        sentences: sents,
        overall_rating: 2.0,
        aspect_ratings: vec![3.0, 1.0],
        sentence_labels: None,
    }
}

pub fn toy_model_config(variant: Variant, encoder: EncoderConfig) -> ModelConfig {
    ModelConfig {
        architecture: Architecture {
            num_classes: 3,
            s_max: 4,
            t_max: 6,
            ..Architecture::new(variant, encoder)
        },
        aspects: AspectSet::new(["room", "service"]).expect("valid aspects"),
        vocab_size: 12,
    }
}

/// Full document loss gradient for every encoder and head pairing.
pub fn model_gradient_checks(cfg: &GradCheckConfig) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (enc_name, enc) in toy_encoders() {
        for variant in Variant::ALL {
            let name = format!("{enc_name}+{variant}");
            let mc = toy_model_config(variant, enc.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            let doc = toy_document(&mut rng, mc.vocab_size, 3);
            let batch = make_batch(&[&doc], mc.architecture.s_max, mc.architecture.t_max);
            let report = Model::new(mc, cfg.seed).and_then(|model| {
                // forward reads values from the graph's store; the model only
                // supplies parameter ids
                let mut store = model.params().clone();
                // zero biases put relu exactly on its kink for padded windows
                let mut brng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(7));
                for id in store.ids().collect::<Vec<_>>() {
                    if store.get(id).rank() == 1 {
                        for v in store.get_mut(id).data_mut() {
                            *v = brng.gen_range(0.1..0.5)
                                * if brng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        }
                    }
                }
                grad_check(
                    &mut store,
                    |g| {
                        let o = model.forward::<ChaCha8Rng>(g, batch.doc(0), None)?;
                        loss_var(g, &o.head, &batch.labels[0], LossWeights::default())
                    },
                    cfg,
                )
            });
            out.push(outcome("models", name, report));
        }
    }
    out
}

fn dense(x: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
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

/// Plain loop evaluation of an attribution head over the first `n` rows
/// of `u`: the pooled score for aspect `j` and class `k` is accumulated
/// term by term rather than through outer products.
pub fn reference_head(
    params: &ParamStore,
    cfg: &HeadConfig,
    u: &Tensor,
    n: usize,
) -> PredictionSet {
    let get = |name: &str| params.get(params.id(name).expect("head parameter")).clone();
    let (w_r, b_r, w_a, b_a) = (
        get("head.w_r"),
        get("head.b_r"),
        get("head.w_a"),
        get("head.b_a"),
    );
    let a = cfg.num_aspects;
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| softmax(&dense(u.row(i), &w_r, b_r.data())))
        .collect();
    let score: Vec<Vec<f64>> = (0..n).map(|i| dense(u.row(i), &w_a, b_a.data())).collect();
    let pooled = |j: usize, k: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            acc += dist[i][j] * score[i][k];
        }
        acc
    };
    let width = score[0].len();
    let row = |j: usize| (0..width).map(|k| pooled(j, k)).collect::<Vec<_>>();
    let overall_dense = || {
        let (w_o, b_o) = (get("head.w_o"), get("head.b_o"));
        let flat: Vec<f64> = (0..n).flat_map(|i| u.row(i).to_vec()).collect();
        let cols = w_o.shape()[1];
        let w = Tensor::new(
            vec![flat.len(), cols],
            w_o.data()[..flat.len() * cols].to_vec(),
        )
        .expect("slice");
        dense(&flat, &w, b_o.data())
    };
    match cfg.variant {
        Variant::C1 => PredictionSet {
            overall: Prediction::Distribution(softmax(&overall_dense())),
            aspects: (0..a)
                .map(|j| Prediction::Distribution(softmax(&row(j))))
                .collect(),
        },
        Variant::C2 => PredictionSet {
            overall: Prediction::Distribution(softmax(&row(a))),
            aspects: (0..a)
                .map(|j| Prediction::Distribution(softmax(&row(j))))
                .collect(),
        },
        _ => PredictionSet {
            overall: Prediction::Scalar(overall_dense()[0] / n as f64),
            aspects: (0..a)
                .map(|j| {
                    let mass: f64 = dist.iter().map(|d| d[j]).sum();
                    Prediction::Scalar(pooled(j, 0) / (mass + cfg.epsilon))
                })
                .collect(),
        },
    }
}

fn flatten(p: &PredictionSet) -> Vec<f64> {
    std::iter::once(&p.overall)
        .chain(&p.aspects)
        .flat_map(|x| match x {
            Prediction::Distribution(d) => d.clone(),
            Prediction::Scalar(v) => vec![*v],
        })
        .collect()
}

/// Compares each attribution head with [`reference_head`] on random
/// parameters, features and sentence counts.
pub fn head_oracle_checks(instances: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for variant in [Variant::C1, Variant::C2, Variant::R] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut error = String::new();
        for _ in 0..instances {
            let s_max = rng.gen_range(1..=6);
            let cfg = HeadConfig {
                variant,
                num_aspects: rng.gen_range(1..=4),
                num_classes: rng.gen_range(2..=5),
                s_max,
                feature_dim: rng.gen_range(1..=6),
                epsilon: 1e-8,
                mask_mode: MaskMode::Hard,
            };
            let n = rng.gen_range(1..=s_max);
            let mut store = ParamStore::new();
            let head = match Head::init(cfg.clone(), &mut store, &mut rng) {
                Ok(h) => h,
                Err(e) => {
                    error = e.to_string();
                    break;
                }
            };
            for id in store.ids().collect::<Vec<_>>() {
                for v in store.get_mut(id).data_mut() {
                    *v = rng.gen_range(-2.0..2.0);
                }
            }
            let u = Tensor::uniform(&[s_max, cfg.feature_dim], 2.0, &mut rng);
            let mask: Vec<bool> = (0..s_max).map(|i| i < n).collect();
            let mut g = Graph::new(&store);
            let got = g
                .constant(u.clone())
                .and_then(|x| head.forward(&mut g, x, &mask))
                .map(|o| o.predictions(&g));
            match got {
                Ok(p) => {
                    let want = reference_head(&store, &cfg, &u, n);
                    for (x, y) in flatten(&p).iter().zip(flatten(&want)) {
                        worst = worst.max((x - y).abs());
                    }
                }
                Err(e) => {
                    error = e.to_string();
                    break;
                }
            }
        }
        out.push(CheckOutcome {
            suite: "oracle",
            name: format!("head {variant}"),
            passed: error.is_empty() && worst <= 1e-12,
            max_error: if error.is_empty() {
                worst
            } else {
                f64::INFINITY
            },
            detail: error,
        });
    }
    out
}

/// Everything above with the given gradient-check settings.
pub fn run_all(cfg: &GradCheckConfig) -> Vec<CheckOutcome> {
    let mut all = op_gradient_checks(cfg);
    all.extend(model_gradient_checks(cfg));
    all.extend(head_oracle_checks(100, cfg.seed));
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::OpKind;

    #[test]
    fn pristine_suite_passes() {
        let results = run_all(&GradCheckConfig::default());
        let failed: Vec<String> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.render())
            .collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert_eq!(results.iter().filter(|r| r.suite == "models").count(), 15);
    }

    #[test]
    fn injected_fault_is_named() {
        let cfg = GradCheckConfig {
            fault: Some(OpKind::Outer),
            ..Default::default()
        };
        let results = op_gradient_checks(&cfg);
        let failed: Vec<&str> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.name.as_str())
            .collect();
        assert_eq!(failed, vec!["outer"]);
    }
}
