//! Turning retrieved trajectories into evidence for the reasoning chain.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::index::CorpusIndex;
use crate::mcts::Trajectory;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("trajectory {0} locates no documents (corpus-containment invariant violated)")]
    Unlocatable(usize),
    #[error("document {0} missing from corpus")]
    MissingDocument(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectStrategy {
    /// The exact retrieved span.
    DirectPath,
    /// The span extended by a context window on both sides.
    Window,
    /// The whole document containing the span.
    CompleteDocument,
}

pub const DEFAULT_WINDOW_CHARS: usize = 200;

/// A selected reference with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: u32,
    pub text: String,
    pub strategy: SelectStrategy,
    /// Index into the trajectory list this evidence came from.
    pub source_trajectory: usize,
}

/// The document holding most occurrences of the trajectory text, ties to the
/// lowest id, plus the byte offset of the first occurrence there.
fn best_location(
    traj: &Trajectory,
    traj_idx: usize,
    index: &CorpusIndex,
) -> Result<(u32, u32), SelectError> {
    let iv = index
        .interval_of(&traj.text)
        .ok_or(SelectError::Unlocatable(traj_idx))?;
    let hits = index.locate_hits(iv);
    if hits.is_empty() {
        return Err(SelectError::Unlocatable(traj_idx));
    }
    let mut best_doc = hits[0].doc_id;
    let mut best_count = 0usize;
    let mut i = 0;
    while i < hits.len() {
        let doc = hits[i].doc_id;
        let count = hits[i..].iter().take_while(|h| h.doc_id == doc).count();
        if count > best_count {
            best_doc = doc;
            best_count = count;
        }
        i += count;
    }
    let first = hits
        .iter()
        .filter(|h| h.doc_id == best_doc)
        .map(|h| h.last_byte)
        .min()
        .unwrap();
    let start = first + 1 - traj.text.len() as u32;
    Ok((best_doc, start))
}

/// Expands `[start, end)` by `window_chars` characters each side, clipped to
/// the document bounds, and returns the resulting slice.
fn window_slice(body: &str, start: usize, end: usize, window_chars: usize) -> &str {
    let left = {
        let mut boundaries: Vec<usize> = body[..start]
            .char_indices()
            .rev()
            .take(window_chars)
            .map(|(i, _)| i)
            .collect();
        boundaries.pop().unwrap_or(start)
    };
    let right = body[end..]
        .char_indices()
        .map(|(i, _)| i)
        .nth(window_chars)
        .map(|i| end + i)
        .unwrap_or(body.len());
    &body[left..right]
}

/// Converts ranked trajectories into evidence under the chosen strategy.
///
/// `direct_path` and `window` emit one Evidence per trajectory;
/// `complete_document` deduplicates documents across trajectories,
/// first-ranked trajectory wins.
pub fn select_documents(
    trajectories: &[Trajectory],
    index: &CorpusIndex,
    corpus: &Corpus,
    strategy: SelectStrategy,
    window_chars: usize,
) -> Result<Vec<Evidence>, SelectError> {
    let mut out = Vec::new();
    let mut seen_docs = BTreeSet::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let (doc_id, start) = best_location(traj, i, index)?;
        let doc = corpus.get(doc_id).ok_or(SelectError::MissingDocument(doc_id))?;
        match strategy {
            SelectStrategy::DirectPath => out.push(Evidence {
                doc_id,
                text: traj.text.clone(),
                strategy,
                source_trajectory: i,
            }),
            SelectStrategy::Window => {
                let start = start as usize;
                let end = start + traj.text.len();
                out.push(Evidence {
                    doc_id,
                    text: window_slice(&doc.body, start, end, window_chars).to_string(),
                    strategy,
                    source_trajectory: i,
                });
            }
            SelectStrategy::CompleteDocument => {
                if seen_docs.insert(doc_id) {
                    out.push(Evidence {
                        doc_id,
                        text: doc.body.clone(),
                        strategy,
                        source_trajectory: i,
                    });
                }
            }
        }
    }
    Ok(out)
}
