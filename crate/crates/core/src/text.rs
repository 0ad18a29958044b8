//! Text normalization shared by the index, the tokenizers, the value
//! scorer and the evaluation metrics.
//!
//! Everything that enters the index or is matched against it goes through
//! [`normalize`] first, so constrained decoding never fails on case or
//! Unicode-form mismatches.

use unicode_normalization::UnicodeNormalization;

/// Canonical form used across the engine: NFC, lowercased, whitespace runs
/// collapsed to single spaces, leading/trailing whitespace trimmed.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let lower = nfc.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    let mut in_space = true; // trims leading whitespace
    for ch in lower.chars() {
        if ch.is_whitespace() {
            if !in_space {
                out.push(' ');
                in_space = true;
            }
        } else {
            out.push(ch);
            in_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Splits normalized text into alphanumeric words. Non-alphanumeric symbols
/// act as boundaries and are dropped.
pub fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Fixed stopword list used by the partial-match labeling rule.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "if", "then", "of", "in", "on", "at", "to", "for",
    "with", "by", "from", "as", "is", "are", "was", "were", "be", "been", "being", "it", "its",
    "this", "that", "these", "those", "he", "she", "they", "we", "you", "i", "his", "her",
    "their", "our", "your", "not", "no", "so", "do", "does", "did", "have", "has",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_collapses_whitespace() {
        assert_eq!(normalize("The  Consul\n is\tan Opera "), "the consul is an opera");
    }

    #[test]
    fn applies_nfc() {
        // U+0065 U+0301 (e + combining acute) composes to U+00E9.
        assert_eq!(normalize("Cafe\u{0301}"), "caf\u{e9}");
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  \t\n "), "");
    }

    #[test]
    fn word_split_drops_punctuation() {
        assert_eq!(words("james tuchet, 5th baron audley."), vec![
            "james", "tuchet", "5th", "baron", "audley"
        ]);
    }
}
