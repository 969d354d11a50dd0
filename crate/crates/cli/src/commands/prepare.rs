use anyhow::{bail, Context, Result};
use saam_core::text::{
    corpus_to_string, keyword_label_sentences, read_corpus, split_corpus, tokenize, CorpusRecord,
    KeywordScheme, SplitConfig,
};
use saam_core::{AspectSet, Vocabulary};
use serde_json::json;

use crate::data::{write_lines, LabelRecord};
use crate::manifest::RunManifest;
use crate::{PrepareArgs, UsageError};

fn parse_aspects(spec: &str) -> Result<AspectSet> {
    Ok(match spec.to_ascii_lowercase().as_str() {
        "hotel" => AspectSet::hotel(),
        "beer" => AspectSet::beer(),
        _ => AspectSet::new(spec.split(',').map(str::trim))?,
    })
}

fn token_sentences(rec: &CorpusRecord) -> usize {
    rec.sentence_texts()
        .iter()
        .filter(|s| !tokenize(s).is_empty())
        .count()
}

pub fn run(args: PrepareArgs) -> Result<()> {
    let mut manifest = RunManifest::start("prepare");
    let aspects = parse_aspects(&args.aspects)?;
    let scheme = args
        .keyword_scheme
        .as_deref()
        .map(str::parse::<KeywordScheme>)
        .transpose()?;
    if args.min_sentences == 0 {
        return Err(UsageError("--min-sentences must be at least 1".into()).into());
    }
    manifest.seed = Some(args.seed);
    manifest.config = json!({
        "aspects": aspects.names(),
        "min_sentences": args.min_sentences,
        "dev_size": args.dev_size,
        "train_fraction": args.train_fraction,
        "keyword_scheme": args.keyword_scheme,
        "min_frequency": args.min_frequency,
    });
    manifest.input("corpus", &args.corpus);

    let records = read_corpus(&args.corpus)?;
    manifest.count("records", records.len());
    let mut complete = Vec::with_capacity(records.len());
    let mut missing = 0;
    for rec in records {
        let gaps = rec.missing_aspects(&aspects);
        if gaps.is_empty() {
            complete.push(rec);
        } else {
            manifest.warn(format!(
                "skipping {}: no rating for {}",
                rec.doc_id,
                gaps.join(", ")
            ));
            missing += 1;
        }
    }
    manifest.count("skipped_missing_aspect", missing);

    let before = complete.len();
    let cfg = SplitConfig {
        train_fraction: args.train_fraction,
        dev_size: args.dev_size,
        min_sentences: args.min_sentences,
        seed: args.seed,
    };
    let min = args.min_sentences;
    let splits = split_corpus(complete, &cfg, |r| token_sentences(r) >= min)?;
    let kept = splits.train.len() + splits.dev.len() + splits.test.len();
    manifest.count("skipped_short", before - kept);
    if splits.train.is_empty() || splits.test.is_empty() {
        bail!(saam_core::Error::Data(format!(
            "insufficient data: {kept} usable reviews leave an empty train or test split"
        )));
    }

    let vocab = Vocabulary::from_texts(
        splits.train.iter().flat_map(|r| r.sentence_texts()),
        args.min_frequency,
    );

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (name, part) in [
        ("train", &splits.train),
        ("dev", &splits.dev),
        ("test", &splits.test),
    ] {
        let path = args.out.join(format!("{name}.jsonl"));
        std::fs::write(&path, corpus_to_string(part))
            .with_context(|| format!("writing {}", path.display()))?;
        manifest.output(name, &path);
        manifest.count(name, part.len());
    }
    let vpath = args.out.join("vocab.tsv");
    vocab.save(&vpath)?;
    manifest.output("vocab", &vpath);
    manifest.count("vocab_size", vocab.len());
    let apath = args.out.join("aspects.json");
    std::fs::write(&apath, serde_json::to_string(&aspects)? + "\n")?;
    manifest.output("aspects", &apath);

    if let Some(scheme) = scheme {
        let mut lines = Vec::with_capacity(kept);
        let mut labelled = 0;
        for rec in splits.train.iter().chain(&splits.dev).chain(&splits.test) {
            let labels = keyword_label_sentences(&rec.sentence_texts(), scheme, &aspects)?;
            labelled += labels
                .iter()
                .filter(|l| **l != saam_core::SentenceLabel::Unlabeled)
                .count();
            let rec = LabelRecord {
                doc_id: rec.doc_id.clone(),
                sentence_labels: labels.into_iter().map(|l| l.render(&aspects)).collect(),
            };
            lines.push(serde_json::to_string(&rec)?);
        }
        let lpath = args.out.join("silver_labels.jsonl");
        write_lines(&lpath, &lines)?;
        manifest.output("silver_labels", &lpath);
        manifest.count("silver_labelled_sentences", labelled);
    }

    eprintln!(
        "prepared {} train / {} dev / {} test reviews, {} vocabulary entries",
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        vocab.len()
    );
    manifest.write(&args.out.join("prepare.manifest.json"))
}
