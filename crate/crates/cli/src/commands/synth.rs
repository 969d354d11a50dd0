use anyhow::Result;
use saam_core::text::{generate_synthetic_corpus, write_corpus, SyntheticConfig};

use crate::manifest::{beside, RunManifest};
use crate::SynthArgs;

pub fn run(args: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::start("synth");
    let cfg = SyntheticConfig {
        num_aspects: args.num_aspects,
        num_docs: args.num_docs,
        overlap: args.overlap,
        filler_sentences: args.filler_sentences,
        sentences_per_aspect: args.sentences_per_aspect,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    manifest.seed = Some(args.seed);
    manifest.config = serde_json::to_value(&cfg)?;
    let corpus = generate_synthetic_corpus(&cfg)?;
    write_corpus(&args.out, &corpus.records)?;
    manifest.output("corpus", &args.out);
    manifest.count("documents", corpus.records.len());
    eprintln!(
        "wrote {} reviews with aspects {}",
        corpus.records.len(),
        corpus.aspects.names().join(",")
    );
    manifest.write(&beside(&args.out))
}
