use anyhow::{Context, Result};
use saam_core::evaluation::{attribution_accuracy, rating_metrics};
use saam_core::text::read_corpus;
use saam_core::SentenceLabel;
use serde_json::Value;

use crate::data::{documents, load_model, read_labels};
use crate::manifest::RunManifest;
use crate::{EvalArgs, Task, UsageError};

pub fn run(args: EvalArgs) -> Result<()> {
    let mut manifest = RunManifest::start("eval");
    let (model, vocab) = load_model(&args.model, &args.split, &mut manifest)?;
    let classification = model.variant().is_classification();
    if let Some(task) = args.task {
        if (task == Task::Classification) != classification {
            let held = if classification {
                "classification"
            } else {
                "regression"
            };
            let asked = if classification {
                "regression"
            } else {
                "classification"
            };
            return Err(UsageError(format!(
                "checkpoint holds a {held} model ({}); --task {asked} does not apply",
                model.variant()
            ))
            .into());
        }
    }
    let aspects = model.aspects().clone();

    manifest.input("split", &args.split);
    let mut records = read_corpus(&args.split)?;
    if let Some(path) = &args.attribution_labels {
        manifest.input("attribution_labels", path);
        let labels = read_labels(path)?;
        for rec in &mut records {
            rec.sentence_labels = labels.get(&rec.doc_id).cloned();
        }
    }
    let docs = documents(&records, &aspects, &vocab, &mut manifest)?;
    if docs.is_empty() {
        anyhow::bail!(saam_core::Error::Data(format!(
            "{} holds no usable reviews",
            args.split.display()
        )));
    }

    let mut preds = Vec::with_capacity(docs.len());
    let mut golds = Vec::with_capacity(docs.len());
    let (mut pred_labels, mut gold_labels) = (Vec::new(), Vec::new());
    let mut any_labels = false;
    for doc in &docs {
        let (p, attr) = model.predict(doc)?;
        preds.push(p);
        golds.push(doc.targets());
        if let Some(gold) = &doc.sentence_labels {
            any_labels = true;
            if let Some(attr) = attr {
                let predicted = attr.sentence_labels();
                gold_labels.extend_from_slice(&gold[..predicted.len()]);
                pred_labels.extend(predicted.into_iter().map(|(l, _)| l));
            }
        }
    }
    let mut report = rating_metrics(&preds, &golds, &aspects)?;
    let scored = gold_labels
        .iter()
        .filter(|l| **l != SentenceLabel::Unlabeled)
        .count();
    manifest.count("labelled_sentences", scored);
    let mut attribution_na = false;
    if any_labels {
        if scored == 0 || !model.variant().has_attribution() {
            attribution_na = true;
        } else {
            report.attribution_accuracy = Some(attribution_accuracy(&pred_labels, &gold_labels)?);
        }
    }

    let mut text = report.to_text();
    let mut json = report.to_flat_json();
    if attribution_na {
        text.push_str("attribution.accuracy: n/a\n");
        if let Value::Object(m) = &mut json {
            m.insert("attribution.accuracy".into(), Value::from("n/a"));
        }
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let tpath = args.out.join("metrics.txt");
    let jpath = args.out.join("metrics.json");
    std::fs::write(&tpath, &text).with_context(|| format!("writing {}", tpath.display()))?;
    std::fs::write(&jpath, serde_json::to_string_pretty(&json)? + "\n")
        .with_context(|| format!("writing {}", jpath.display()))?;
    manifest.output("metrics_text", &tpath);
    manifest.output("metrics_json", &jpath);
    print!("{text}");
    manifest.write(&args.out.join("eval.manifest.json"))
}
