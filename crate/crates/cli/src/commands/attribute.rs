use anyhow::Result;
use saam_core::attribution::sentence_scores;
use serde_json::{json, Map, Value};

use crate::data::{load_documents, write_lines};
use crate::manifest::{beside, RunManifest};
use crate::{AttributeArgs, UsageError};

pub fn run(args: AttributeArgs) -> Result<()> {
    let mut manifest = RunManifest::start("attribute");
    let (model, vocab) = load_model_for_attribution(&args.model, &args.corpus, &mut manifest)?;
    let aspects = model.aspects().clone();
    let docs = load_documents(&args.corpus, &aspects, &vocab, &mut manifest)?;
    let variant = model.variant();

    let mut lines = Vec::new();
    for doc in &docs {
        let (_, attr) = model.predict(doc)?;
        let attr = attr.expect("attribution variant");
        let scores = sentence_scores(&attr);
        for (i, (label, confidence)) in attr.sentence_labels().into_iter().enumerate() {
            let mut dist = Map::new();
            for (j, p) in attr.aspect_dist[i].iter().enumerate() {
                dist.insert(
                    variant.slot_label(j, aspects.len()).render(&aspects),
                    json!(p),
                );
            }
            let label = label.render(&aspects);
            let text = &doc.sentence_texts[i];
            let mut rec = json!({
                "doc_id": doc.doc_id,
                "index": i,
                "text": text,
                "label": label,
                "confidence": confidence,
                "aspect_distribution": Value::Object(dist),
                "score": scores[i],
                "annotation": format!("{text} [{:.2}, {label}]", scores[i]),
            });
            if variant.is_classification() {
                rec["class_scores"] = json!(attr.rating_scores[i]);
            }
            lines.push(serde_json::to_string(&rec)?);
        }
    }
    write_lines(&args.out, &lines)?;
    manifest.output("attribution", &args.out);
    manifest.count("sentences", lines.len());
    eprintln!(
        "wrote {} sentence records for {} reviews",
        lines.len(),
        docs.len()
    );
    manifest.write(&beside(&args.out))
}

pub fn load_model_for_attribution(
    input: &crate::ModelInput,
    data: &std::path::Path,
    manifest: &mut RunManifest,
) -> Result<(saam_core::Model, saam_core::Vocabulary)> {
    let (model, vocab) = crate::data::load_model(input, data, manifest)?;
    if !model.variant().has_attribution() {
        return Err(UsageError(format!(
            "the {} head has no sentence attribution layer",
            model.variant()
        ))
        .into());
    }
    Ok((model, vocab))
}
