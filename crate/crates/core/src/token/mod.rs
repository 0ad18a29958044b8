//! The token vocabulary abstraction and the built-in test tokenizers.
//!
//! Real language-model tokenizers plug in through [`Tokenizer`]; the
//! character- and word-level tokenizers below make the engine testable with
//! no model attached.

mod bridge;

pub use bridge::{is_valid_path, Bridge, ValidToken};

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(String),
    #[error("token id {0} out of range")]
    UnknownId(u32),
    #[error("failed to read vocabulary: {0}")]
    VocabLoad(String),
}

/// Maps between token ids and their text surfaces.
///
/// `surface` must return the empty string only for special ids (ids that can
/// never appear in corpus text); such ids are filtered out of constrained
/// decoding up front.
pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> u32;
    fn surface(&self, id: u32) -> &str;
    fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError>;

    fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&id| self.surface(id)).collect()
    }
}

pub type SharedTokenizer = Arc<dyn Tokenizer>;

/// One token per character of the corpus alphabet.
pub struct CharTokenizer {
    surfaces: Vec<String>,
    ids: HashMap<char, u32>,
}

impl CharTokenizer {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut chars: Vec<char> = corpus
            .docs()
            .iter()
            .flat_map(|d| d.body.chars())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        let surfaces: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
        let ids = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        CharTokenizer { surfaces, ids }
    }
}

impl Tokenizer for CharTokenizer {
    fn vocab_size(&self) -> u32 {
        self.surfaces.len() as u32
    }

    fn surface(&self, id: u32) -> &str {
        self.surfaces.get(id as usize).map(String::as_str).unwrap_or("")
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        text.chars()
            .map(|c| {
                self.ids
                    .get(&c)
                    .copied()
                    .ok_or_else(|| TokenizerError::UnknownSymbol(c.to_string()))
            })
            .collect()
    }
}

/// Whitespace-word tokenizer with a space-prefixed surface convention: every
/// corpus word appears twice in the vocabulary, once bare (usable at the
/// start of a path) and once with a leading space.
pub struct WordTokenizer {
    surfaces: Vec<String>,
    ids: HashMap<String, u32>,
}

impl WordTokenizer {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut words: Vec<&str> = corpus
            .docs()
            .iter()
            .flat_map(|d| d.body.split(' '))
            .filter(|w| !w.is_empty())
            .collect();
        words.sort_unstable();
        words.dedup();
        let mut surfaces = Vec::with_capacity(words.len() * 2);
        for w in &words {
            surfaces.push((*w).to_string());
        }
        for w in &words {
            surfaces.push(format!(" {w}"));
        }
        let ids = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        WordTokenizer { surfaces, ids }
    }
}

impl Tokenizer for WordTokenizer {
    fn vocab_size(&self) -> u32 {
        self.surfaces.len() as u32
    }

    fn surface(&self, id: u32) -> &str {
        self.surfaces.get(id as usize).map(String::as_str).unwrap_or("")
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut first = !text.starts_with(' ');
        for word in text.split(' ').filter(|w| !w.is_empty()) {
            let key = if first { word.to_string() } else { format!(" {word}") };
            first = false;
            let id = self
                .ids
                .get(&key)
                .copied()
                .ok_or_else(|| TokenizerError::UnknownSymbol(key.clone()))?;
            out.push(id);
        }
        Ok(out)
    }
}

/// Tokenizer defined by an external vocabulary file: a JSON array of token
/// surfaces, id = array position. Encoding is greedy longest-match.
pub struct FileVocabTokenizer {
    surfaces: Vec<String>,
    by_first_byte: HashMap<u8, Vec<u32>>,
}

impl FileVocabTokenizer {
    pub fn from_surfaces(surfaces: Vec<String>) -> Self {
        let mut by_first_byte: HashMap<u8, Vec<u32>> = HashMap::new();
        for (i, s) in surfaces.iter().enumerate() {
            if let Some(&b) = s.as_bytes().first() {
                by_first_byte.entry(b).or_default().push(i as u32);
            }
        }
        // Longest surfaces first so encode can take the first match.
        for ids in by_first_byte.values_mut() {
            ids.sort_by_key(|&id| std::cmp::Reverse(surfaces[id as usize].len()));
        }
        FileVocabTokenizer {
            surfaces,
            by_first_byte,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TokenizerError> {
        let data = std::fs::read_to_string(path).map_err(|e| TokenizerError::VocabLoad(e.to_string()))?;
        let surfaces: Vec<String> =
            serde_json::from_str(&data).map_err(|e| TokenizerError::VocabLoad(e.to_string()))?;
        Ok(Self::from_surfaces(surfaces))
    }
}

impl Tokenizer for FileVocabTokenizer {
    fn vocab_size(&self) -> u32 {
        self.surfaces.len() as u32
    }

    fn surface(&self, id: u32) -> &str {
        self.surfaces.get(id as usize).map(String::as_str).unwrap_or("")
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let first = rest.as_bytes()[0];
            let candidates = self
                .by_first_byte
                .get(&first)
                .ok_or_else(|| TokenizerError::UnknownSymbol(rest.chars().next().unwrap().to_string()))?;
            let id = candidates
                .iter()
                .copied()
                .find(|&id| rest.starts_with(&self.surfaces[id as usize]))
                .ok_or_else(|| TokenizerError::UnknownSymbol(rest.chars().next().unwrap().to_string()))?;
            out.push(id);
            rest = &rest[self.surfaces[id as usize].len()..];
        }
        Ok(out)
    }
}
