//! Subject-filtered sub-indices with an LRU memo.
//!
//! A search step narrows its space by building a fresh index over only the
//! documents whose title or body mentions the query's subject. Sub-indices
//! are built on demand and memoized per normalized subject.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;

use crate::corpus::Corpus;
use crate::index::{CorpusIndex, IndexError};
use crate::text::normalize;

pub const DEFAULT_MEMO_CAPACITY: usize = 128;

/// Shared handle over the full index plus the per-subject memo.
pub struct SubjectIndexCache {
    corpus: Arc<Corpus>,
    full: Arc<CorpusIndex>,
    sa_rate: u32,
    memo: Mutex<LruCache<String, Arc<CorpusIndex>>>,
}

impl SubjectIndexCache {
    pub fn new(corpus: Arc<Corpus>, full: Arc<CorpusIndex>, memo_capacity: usize) -> Self {
        let cap = NonZeroUsize::new(memo_capacity.max(1)).unwrap();
        SubjectIndexCache {
            sa_rate: full.sa_rate(),
            corpus,
            full,
            memo: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn full_index(&self) -> Arc<CorpusIndex> {
        Arc::clone(&self.full)
    }

    /// The index restricted to documents mentioning `subject`. Falls back to
    /// the full index when no document matches or the subject normalizes to
    /// the empty string.
    pub fn subject_index(&self, subject: &str) -> Result<Arc<CorpusIndex>, IndexError> {
        let subject = normalize(subject);
        if subject.is_empty() {
            return Ok(self.full_index());
        }
        if let Some(hit) = self.memo.lock().unwrap().get(&subject) {
            return Ok(Arc::clone(hit));
        }

        let matching: Vec<usize> = self
            .corpus
            .docs()
            .iter()
            .enumerate()
            .filter(|(_, d)| d.title.contains(&subject) || d.body.contains(&subject))
            .map(|(i, _)| i)
            .collect();
        // No match falls back to the full index; an all-match subject would
        // rebuild it identically, so reuse it too.
        let built = if matching.is_empty() || matching.len() == self.corpus.len() {
            self.full_index()
        } else {
            Arc::new(CorpusIndex::build_subset(&self.corpus, &matching, self.sa_rate)?)
        };
        self.memo.lock().unwrap().put(subject, Arc::clone(&built));
        Ok(built)
    }
}
