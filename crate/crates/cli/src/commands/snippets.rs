use anyhow::Result;
use saam_core::attribution::{explain_discrepancy, extract_snippets, DocumentView, Snippet};
use serde_json::json;

use crate::commands::attribute::load_model_for_attribution;
use crate::data::{load_documents, write_lines};
use crate::manifest::{beside, RunManifest};
use crate::{SnippetArgs, UsageError};

fn round3(x: f64) -> f64 {
    (x * 1e3).round() / 1e3
}

fn record(s: &Snippet) -> serde_json::Value {
    json!({
        "doc_id": s.doc_id,
        "sentence_index": s.sentence_index,
        "aspect": s.aspect,
        "score": round3(s.score),
        "weight": round3(s.weight),
        "polarity": s.polarity,
        "text": s.text,
    })
}

pub fn run(args: SnippetArgs) -> Result<()> {
    let mut manifest = RunManifest::start("snippets");
    let (model, vocab) = load_model_for_attribution(&args.model, &args.corpus, &mut manifest)?;
    if model.variant().is_classification() && !args.class_proxy {
        return Err(UsageError(format!(
            "the {} head predicts classes; pass --class-proxy to score sentences by expected class value",
            model.variant()
        ))
        .into());
    }
    let aspects = model.aspects().clone();
    if let Some(a) = &args.aspect {
        if aspects.index_of(a).is_none() {
            return Err(UsageError(format!(
                "unknown aspect {a:?}; expected one of {}",
                aspects.names().join(", ")
            ))
            .into());
        }
    }
    if !(0.0..1.0).contains(&args.tau) {
        return Err(UsageError(format!("--tau must lie in [0, 1), got {}", args.tau)).into());
    }
    manifest.config = json!({
        "model": manifest.config,
        "aspect": args.aspect,
        "explain": args.explain,
        "polarity": args.polarity,
        "tau": args.tau,
        "top_k": args.top_k,
        "margin": args.margin,
        "class_proxy": args.class_proxy,
    });
    let docs = load_documents(&args.corpus, &aspects, &vocab, &mut manifest)?;

    let mut snippets = Vec::new();
    for doc in &docs {
        let (preds, attr) = model.predict(doc)?;
        let attr = attr.expect("attribution variant");
        let view = DocumentView {
            doc_id: &doc.doc_id,
            sentence_texts: &doc.sentence_texts,
            attribution: &attr,
        };
        match &args.aspect {
            Some(a) => snippets.extend(extract_snippets(
                view,
                &aspects,
                a,
                args.polarity,
                args.tau,
                args.top_k,
            )?),
            None => snippets.extend(explain_discrepancy(
                view,
                &preds,
                &aspects,
                args.tau,
                args.margin,
            )),
        }
    }
    let lines = snippets
        .iter()
        .map(|s| serde_json::to_string(&record(s)))
        .collect::<Result<Vec<_>, _>>()?;
    write_lines(&args.out, &lines)?;
    manifest.output("snippets", &args.out);
    manifest.count("snippets", snippets.len());
    if snippets.is_empty() {
        eprintln!(
            "no sentence reached attribution weight {} in {} reviews",
            args.tau,
            docs.len()
        );
    }
    for s in &snippets {
        println!("{}", s.render());
    }
    manifest.write(&beside(&args.out))
}
