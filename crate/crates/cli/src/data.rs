//! Loading checkpoints, vocabularies and documents.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use saam_core::text::{read_corpus, CorpusRecord};
use saam_core::{AspectSet, Checkpoint, Model, ReviewDocument, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::ModelInput;

pub fn read_aspects(path: &Path) -> Result<AspectSet> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `vocab.tsv` next to `data`, unless given explicitly.
pub fn vocab_path(explicit: Option<&Path>, data: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => data.with_file_name("vocab.tsv"),
    }
}

/// Checkpoint whose vocabulary hash matches the vocabulary file.
pub fn load_model(
    input: &ModelInput,
    data: &Path,
    manifest: &mut RunManifest,
) -> Result<(Model, Vocabulary)> {
    let vpath = vocab_path(input.vocab.as_deref(), data);
    manifest.input("checkpoint", &input.checkpoint);
    manifest.input("vocab", &vpath);
    let ckpt = Checkpoint::load(&input.checkpoint)?;
    let vocab = Vocabulary::load(&vpath).with_context(|| format!("loading {}", vpath.display()))?;
    ckpt.verify_vocabulary(&vocab)?;
    manifest.config = serde_json::to_value(&ckpt.model_config)?;
    manifest.seed = ckpt.train_config.as_ref().map(|c| c.seed);
    Ok((ckpt.into_model()?, vocab))
}

/// Tokenized documents; records lacking an aspect rating or any known token
/// are skipped with a warning.
pub fn documents(
    records: &[CorpusRecord],
    aspects: &AspectSet,
    vocab: &Vocabulary,
    manifest: &mut RunManifest,
) -> Result<Vec<ReviewDocument>> {
    let mut docs = Vec::with_capacity(records.len());
    let (mut missing, mut empty) = (0, 0);
    for rec in records {
        let gaps = rec.missing_aspects(aspects);
        if !gaps.is_empty() {
            manifest.warn(format!(
                "skipping {}: no rating for {}",
                rec.doc_id,
                gaps.join(", ")
            ));
            missing += 1;
            continue;
        }
        let doc = ReviewDocument::from_record(rec, aspects, vocab)?;
        if doc.num_sentences() == 0 {
            manifest.warn(format!("skipping {}: no known tokens", rec.doc_id));
            empty += 1;
            continue;
        }
        docs.push(doc);
    }
    manifest.add("skipped_missing_aspect", missing);
    manifest.add("skipped_empty", empty);
    manifest.add("documents", docs.len());
    Ok(docs)
}

pub fn load_documents(
    path: &Path,
    aspects: &AspectSet,
    vocab: &Vocabulary,
    manifest: &mut RunManifest,
) -> Result<Vec<ReviewDocument>> {
    manifest.input("corpus", path);
    let records = read_corpus(path)?;
    documents(&records, aspects, vocab, manifest)
}

/// One line of a sentence label file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub doc_id: String,
    pub sentence_labels: Vec<String>,
}

pub fn read_labels(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| saam_core::Error::Record {
                line: i + 1,
                msg: e.to_string(),
            })
            .with_context(|| format!("parsing {}", path.display()))?;
        if out
            .insert(rec.doc_id.clone(), rec.sentence_labels)
            .is_some()
        {
            bail!(saam_core::Error::Record {
                line: i + 1,
                msg: format!("duplicate doc_id {:?}", rec.doc_id)
            });
        }
    }
    Ok(out)
}

/// Writes `lines` joined by newlines, each followed by one.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
