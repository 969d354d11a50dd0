use anyhow::{Context, Result};
use saam_core::text::read_corpus;
use saam_core::training::{train_with, Checkpoint, TrainConfig};
use saam_core::Vocabulary;

use crate::data::{documents, read_aspects, write_lines};
use crate::manifest::{beside, RunManifest};
use crate::TrainArgs;

/// Flags override the file.
fn apply_overrides(cfg: &mut TrainConfig, args: &TrainArgs) {
    if let Some(v) = args.variant {
        cfg.architecture.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.max_epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(p) = args.patience {
        cfg.patience = p;
    }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::start("train");
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg =
        TrainConfig::from_toml(&text).with_context(|| format!("in {}", args.config.display()))?;
    apply_overrides(&mut cfg, &args);
    cfg.validate()?;
    manifest.seed = Some(cfg.seed);
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.input("config", &args.config);

    let vpath = args.data.join("vocab.tsv");
    let apath = args.data.join("aspects.json");
    let vocab = Vocabulary::load(&vpath).with_context(|| format!("loading {}", vpath.display()))?;
    let aspects = read_aspects(&apath)?;
    manifest.input("vocab", &vpath);
    manifest.input("aspects", &apath);

    let train_path = args.data.join("train.jsonl");
    let dev_path = args.data.join("dev.jsonl");
    manifest.input("train", &train_path);
    manifest.input("dev", &dev_path);
    let train_docs = documents(&read_corpus(&train_path)?, &aspects, &vocab, &mut manifest)?;
    let n_train = train_docs.len();
    let dev_docs = documents(&read_corpus(&dev_path)?, &aspects, &vocab, &mut manifest)?;
    manifest.count("train_documents", n_train);
    manifest.count("dev_documents", dev_docs.len());
    manifest.counts.remove("documents");

    let outcome = train_with(&cfg, &aspects, vocab.len(), &train_docs, &dev_docs, |r| {
        let acc = r
            .dev_avg_aspect_accuracy
            .map(|a| format!(" dev_avg_aspect_acc {a:.4}"))
            .unwrap_or_default();
        eprintln!(
            "epoch {:>3}  train_loss {:.6}  dev_loss {:.6}  dev_avg_aspect_mse {:.6}{acc}",
            r.epoch, r.train_loss, r.dev_loss, r.dev_avg_aspect_mse
        );
    })?;

    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Checkpoint::from_model(&outcome.model, Some(&cfg), &vocab).save(&args.out)?;
    manifest.output("checkpoint", &args.out);

    let mut hpath = args.out.clone().into_os_string();
    hpath.push(".history.jsonl");
    let hpath = std::path::PathBuf::from(hpath);
    let lines = outcome
        .history
        .iter()
        .map(serde_json::to_string)
        .collect::<Result<Vec<_>, _>>()?;
    write_lines(&hpath, &lines)?;
    manifest.output("history", &hpath);
    manifest.count("epochs", outcome.history.len());
    manifest.count("best_epoch", outcome.best_epoch);
    eprintln!(
        "best epoch {} with dev loss {:.6}; checkpoint {}",
        outcome.best_epoch,
        outcome.best_dev_loss,
        args.out.display()
    );
    manifest.write(&beside(&args.out))
}
