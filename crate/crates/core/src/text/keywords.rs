//! Silver sentence labels from reviewer section prefixes.

use std::str::FromStr;

use super::corpus::{AspectSet, SentenceLabel};
use super::tokenize::tokenize;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeywordScheme {
    /// `A:` Appearance, `S:` smell (Aroma), `M:` mouthfeel (Palate), `T:` Taste.
    Beer,
}

impl FromStr for KeywordScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beer" => Ok(Self::Beer),
            _ => Err(Error::Config(format!("unknown keyword scheme {s:?}"))),
        }
    }
}

impl KeywordScheme {
    pub fn aspects(self) -> &'static [&'static str] {
        match self {
            Self::Beer => &["Appearance", "Taste", "Palate", "Aroma"],
        }
    }

    /// Aspect named by a sentence's first token, if it is a prefix.
    pub fn aspect_for_token(self, token: &str) -> Option<&'static str> {
        match self {
            Self::Beer => match token.to_ascii_lowercase().as_str() {
                "a:" => Some("Appearance"),
                "s:" => Some("Aroma"),
                "m:" => Some("Palate"),
                "t:" => Some("Taste"),
                _ => None,
            },
        }
    }
}

/// Labels each sentence from its first token only; sentences without a
/// recognised prefix are [`SentenceLabel::Unlabeled`].
pub fn keyword_label_sentences<S: AsRef<str>>(
    sentences: &[S],
    scheme: KeywordScheme,
    aspects: &AspectSet,
) -> Result<Vec<SentenceLabel>> {
    let mut index = Vec::new();
    for name in scheme.aspects() {
        let i = aspects.index_of(name).ok_or_else(|| {
            Error::Config(format!(
                "aspect set lacks {name}, required by the keyword scheme"
            ))
        })?;
        index.push((*name, i));
    }
    Ok(sentences
        .iter()
        .map(|s| {
            let first = tokenize(s.as_ref()).into_iter().next();
            first
                .as_deref()
                .and_then(|t| scheme.aspect_for_token(t))
                .and_then(|name| index.iter().find(|(n, _)| *n == name))
                .map_or(SentenceLabel::Unlabeled, |(_, i)| SentenceLabel::Aspect(*i))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beer_prefixes() {
        let set = AspectSet::beer();
        let labels = keyword_label_sentences(
            &[
                "A: pours amber",
                "S: citrus nose",
                "m: thin",
                "T: bitter finish",
                "Great beer overall",
                "Taste: sweet",
            ],
            KeywordScheme::Beer,
            &set,
        )
        .unwrap();
        let name = |l: &SentenceLabel| l.render(&set);
        assert_eq!(
            labels.iter().map(name).collect::<Vec<_>>(),
            vec![
                "Appearance",
                "Aroma",
                "Palate",
                "Taste",
                "unlabeled",
                "unlabeled"
            ]
        );
    }

    #[test]
    fn unknown_scheme() {
        assert!("hotel".parse::<KeywordScheme>().is_err());
        assert_eq!(
            "BEER".parse::<KeywordScheme>().unwrap(),
            KeywordScheme::Beer
        );
    }

    #[test]
    fn requires_beer_aspects() {
        let err = keyword_label_sentences(&["A: x"], KeywordScheme::Beer, &AspectSet::hotel());
        assert!(err.is_err());
    }
}
