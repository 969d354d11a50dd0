use std::sync::OnceLock;

use regex::Regex;

use super::vocab::Vocabulary;

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // A lone letter followed by ':' stays one token ("a:", "s:") so the
    // reviewer section prefixes survive tokenization.
    RE.get_or_init(|| Regex::new(r"\b[a-z]:|[\w']+").expect("valid token regex"))
}

/// Splits prose into sentences at `.`, `!` or `?` followed by whitespace or
/// the end of input. Empty sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Lowercases and splits a sentence into word tokens; punctuation is dropped
/// except for the colon of a single-letter prefix such as `"a:"`.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let lower = sentence.to_lowercase();
    token_pattern()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Sentence-split, tokenize and map to ids. Sentences without tokens are
/// dropped.
pub fn tokenize_and_split(text: &str, vocab: &Vocabulary) -> Vec<Vec<u32>> {
    split_sentences(text)
        .iter()
        .map(|s| vocab.encode(&tokenize(s)))
        .filter(|ids| !ids.is_empty())
        .collect()
}
