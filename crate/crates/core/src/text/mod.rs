//! Corpus ingestion, tokenization, vocabulary, batching, splits, silver
//! labels and a synthetic corpus generator.

mod batch;
mod corpus;
mod keywords;
mod split;
mod synthetic;
mod tokenize;
mod vocab;

pub use batch::{make_batch, PaddedBatch, PaddedDoc};
pub use corpus::{
    corpus_to_string, parse_corpus, read_corpus, write_corpus, AspectSet, CorpusRecord,
    RatingTargets, ReviewDocument, SentenceLabel,
};
pub use keywords::{keyword_label_sentences, KeywordScheme};
pub use split::{split_corpus, split_documents, SplitConfig, Splits, DEFAULT_DEV_CAP};
pub use synthetic::{
    generate_synthetic_corpus, sentiment_rating, sentiment_token, SyntheticConfig, SyntheticCorpus,
};
pub use tokenize::{split_sentences, tokenize, tokenize_and_split};
pub use vocab::Vocabulary;
