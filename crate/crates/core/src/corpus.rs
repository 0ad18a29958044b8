//! The document collection: loading, normalization and validation.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize;

/// Byte reserved as the per-document terminator inside the index. Documents
/// may not contain it.
pub const SENTINEL: u8 = 0x00;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("document {id} has an empty body after normalization")]
    EmptyBody { id: u32 },
    #[error("document {id} contains the reserved sentinel byte")]
    SentinelInBody { id: u32 },
    #[error("duplicate document id {id}")]
    DuplicateId { id: u32 },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One record of the corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDocument {
    id: u32,
    title: String,
    text: String,
}

/// A document after normalization. `body` is what gets indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: u32,
    pub title: String,
    pub body: String,
}

impl Document {
    pub fn new(id: u32, title: &str, body: &str) -> Result<Self, CorpusError> {
        let title = normalize(title);
        let body = normalize(body);
        if body.is_empty() {
            return Err(CorpusError::EmptyBody { id });
        }
        if body.as_bytes().contains(&SENTINEL) || title.as_bytes().contains(&SENTINEL) {
            return Err(CorpusError::SentinelInBody { id });
        }
        Ok(Document { id, title, body })
    }
}

/// An immutable, validated document collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<u32, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        if docs.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.id, i).is_some() {
                return Err(CorpusError::DuplicateId { id: doc.id });
            }
        }
        Ok(Corpus { docs, by_id })
    }

    /// Builds a corpus from raw (id, title, text) triples, normalizing each.
    pub fn from_raw<I, S1, S2>(items: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (u32, S1, S2)>,
        S1: AsRef<str>,
        S2: AsRef<str>,
    {
        let docs = items
            .into_iter()
            .map(|(id, t, b)| Document::new(id, t.as_ref(), b.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::new(docs)
    }

    /// Reads a JSON Lines corpus file: one `{"id":…,"title":…,"text":…}`
    /// object per line. Blank lines are skipped.
    pub fn load_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut docs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawDocument = serde_json::from_str(&line).map_err(|source| {
                CorpusError::Parse {
                    line: lineno + 1,
                    source,
                }
            })?;
            docs.push(Document::new(raw.id, &raw.title, &raw.text)?);
        }
        Corpus::new(docs)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Document> {
        self.by_id.get(&id).map(|&i| &self.docs[i])
    }

    /// Documents whose normalized title or body contains `subject` as a
    /// substring. `subject` must already be normalized.
    pub fn matching_subject(&self, subject: &str) -> Vec<&Document> {
        self.docs
            .iter()
            .filter(|d| d.title.contains(subject) || d.body.contains(subject))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_doc_corpus() -> Corpus {
        Corpus::from_raw(vec![
            (0u32, "The Consul", "The Consul is an opera"),
            (1, "Arlecchino", "Arlecchino is a one-act opera"),
            (2, "Trap", "The trap retains fluid"),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_empty_corpus() {
        assert!(matches!(Corpus::new(vec![]), Err(CorpusError::Empty)));
    }

    #[test]
    fn rejects_empty_body() {
        let err = Document::new(7, "t", "   ").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyBody { id: 7 }));
    }

    #[test]
    fn rejects_sentinel() {
        let err = Document::new(3, "t", "a\u{0}b").unwrap_err();
        assert!(matches!(err, CorpusError::SentinelInBody { id: 3 }));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let docs = vec![
            Document::new(1, "a", "x").unwrap(),
            Document::new(1, "b", "y").unwrap(),
        ];
        assert!(matches!(Corpus::new(docs), Err(CorpusError::DuplicateId { id: 1 })));
    }

    #[test]
    fn subject_matching_scans_titles_and_bodies() {
        let corpus = three_doc_corpus();
        let hits: Vec<u32> = corpus.matching_subject("opera").iter().map(|d| d.id).collect();
        assert_eq!(hits, vec![0, 1]);
        let hits: Vec<u32> = corpus.matching_subject("trap").iter().map(|d| d.id).collect();
        assert_eq!(hits, vec![2]);
        assert!(corpus.matching_subject("zzz").is_empty());
    }
}
