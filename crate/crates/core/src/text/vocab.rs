use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Token to id mapping. Id 0 is padding and id 1 the unknown token; real
/// tokens start at 2 in descending frequency order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    /// Builds from a token stream, keeping tokens seen at least
    /// `min_frequency` times. Ties in frequency are broken lexicographically.
    pub fn build<I, S>(tokens: I, min_frequency: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut vocab = Self {
            tokens: vec![Self::PAD_TOKEN.into(), Self::UNK_TOKEN.into()],
            counts: vec![0, 0],
            index: HashMap::new(),
        };
        for (tok, count) in kept {
            vocab.tokens.push(tok);
            vocab.counts.push(count);
        }
        vocab.reindex();
        vocab
    }

    /// Tokenizes every text (sentence splitting is irrelevant for counting).
    pub fn from_texts<I, S>(texts: I, min_frequency: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens: Vec<String> = texts
            .into_iter()
            .flat_map(|t| super::tokenize(t.as_ref()))
            .collect();
        Self::build(tokens, min_frequency)
    }

    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    /// Maps tokens to ids; unseen tokens become [`Self::UNK`]. The reserved
    /// marker strings are treated as ordinary unknown text.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| match self.id(t.as_ref()) {
                Some(id) if id > Self::UNK => id,
                _ => Self::UNK,
            })
            .collect()
    }

    /// `token \t id \t count` lines sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            out.push_str(&format!("{t}\t{i}\t{c}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Record {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected token<TAB>id<TAB>count"));
            }
            let id: usize = fields[1].parse().map_err(|_| bad("invalid id"))?;
            let count: u64 = fields[2].parse().map_err(|_| bad("invalid count"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and sorted"));
            }
            tokens.push(fields[0].to_string());
            counts.push(count);
        }
        if tokens.len() < 2 || tokens[0] != Self::PAD_TOKEN || tokens[1] != Self::UNK_TOKEN {
            return Err(Error::Data(
                "vocabulary must start with the <pad> and <unk> entries".into(),
            ));
        }
        let mut vocab = Self {
            tokens,
            counts,
            index: HashMap::new(),
        };
        vocab.reindex();
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Data("duplicate token in vocabulary".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    /// SHA-256 of the TSV serialization.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_tsv().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_threshold() {
        let v = Vocabulary::from_texts(["a a b"], 1);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        assert_eq!(v.len(), 4);

        let v = Vocabulary::from_texts(["a a b"], 2);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), None);
        assert_eq!(v.encode(&["b"]), vec![Vocabulary::UNK]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocabulary::build(["zeta", "alpha", "mid", "alpha", "zeta"], 1);
        assert_eq!(v.id("alpha"), Some(2));
        assert_eq!(v.id("zeta"), Some(3));
        assert_eq!(v.id("mid"), Some(4));
    }

    #[test]
    fn deterministic_rebuild() {
        let text = ["the room was clean and the staff kind", "the food was bad"];
        let a = Vocabulary::from_texts(text, 1);
        let b = Vocabulary::from_texts(text, 1);
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::from_texts(["x y y z z z"], 1);
        let back = Vocabulary::from_tsv(&v.to_tsv()).unwrap();
        assert_eq!(v, back);
        assert!(v
            .to_tsv()
            .starts_with("<pad>\t0\t0\n<unk>\t1\t0\nz\t2\t3\n"));
    }

    #[test]
    fn rejects_sparse_ids() {
        assert!(Vocabulary::from_tsv("<pad>\t0\t0\n<unk>\t2\t0\n").is_err());
        assert!(Vocabulary::from_tsv("a\t0\t1\n").is_err());
    }

    #[test]
    fn padding_never_produced() {
        let v = Vocabulary::from_texts(["a b"], 1);
        assert!(v
            .encode(&["<pad>", "a", "zzz"])
            .iter()
            .all(|&i| i != Vocabulary::PAD));
    }
}
