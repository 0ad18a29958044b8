//! Answer-containment scoring for candidate paths, the soft-label rule used
//! to grade rollouts, and the training-pair emitter.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{is_stopword, normalize, words};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Soft labels: full match, partial match, no match.
pub const LABEL_FULL: f64 = 1.0;
pub const LABEL_PARTIAL: f64 = 0.8;
pub const LABEL_NONE: f64 = 0.0;

/// Whole-word occurrence with a closing boundary. The end of the string does
/// not count as a boundary on the right, so a label can never be revoked by
/// appending more text to the path.
fn has_whole_word(path: &str, word: &str) -> bool {
    let mut start = 0;
    while let Some(rel) = path[start..].find(word) {
        let at = start + rel;
        let end = at + word.len();
        let left_ok = at == 0
            || !path[..at].chars().next_back().map(char::is_alphanumeric).unwrap_or(false);
        let right_ok = end < path.len()
            && !path[end..].chars().next().map(char::is_alphanumeric).unwrap_or(false);
        if left_ok && right_ok {
            return true;
        }
        start = at + 1;
    }
    false
}

/// Grades how much of any gold answer a path contains: 1.0 when a full gold
/// string occurs, 0.8 when a non-stopword gold word (>= 2 symbols) occurs as
/// a whole word, 0.0 otherwise. Both sides are normalized first.
pub fn containment_label(gold_answers: &[String], path_text: &str) -> f64 {
    let path = normalize(path_text);
    let mut best = LABEL_NONE;
    for gold in gold_answers {
        let gold = normalize(gold);
        if gold.is_empty() {
            continue;
        }
        if path.contains(&gold) {
            return LABEL_FULL;
        }
        if best < LABEL_PARTIAL {
            for w in words(&gold) {
                if w.chars().count() >= 2 && !is_stopword(w) && has_whole_word(&path, w) {
                    best = LABEL_PARTIAL;
                    break;
                }
            }
        }
    }
    best
}

/// Estimates, in `[0, 1]`, whether a candidate path contains (part of) the
/// answer to a question.
pub trait ValueScorer: Send + Sync {
    fn score(&self, question: &str, path_text: &str) -> Result<f64, ScoreError>;
}

pub type SharedScorer = Arc<dyn ValueScorer>;

/// Grades directly against configured gold answers. Test and ablation mode;
/// the question is not consulted.
pub struct OracleScorer {
    gold_answers: Vec<String>,
}

impl OracleScorer {
    pub fn new(gold_answers: Vec<String>) -> Self {
        OracleScorer { gold_answers }
    }
}

impl ValueScorer for OracleScorer {
    fn score(&self, _question: &str, path_text: &str) -> Result<f64, ScoreError> {
        Ok(containment_label(&self.gold_answers, path_text))
    }
}

/// One labeled rollout for external value-network training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub path: String,
    pub label: f64,
}

/// Labels every rollout of a finished search and appends the pairs to `sink`
/// as JSON Lines. Returns the number of lines written.
pub fn emit_training_pairs(
    question: &str,
    rollout_texts: &[String],
    gold_answers: &[String],
    sink: &mut impl Write,
) -> std::io::Result<usize> {
    let mut written = 0;
    for text in rollout_texts {
        let pair = TrainingPair {
            question: question.to_string(),
            path: text.clone(),
            label: containment_label(gold_answers, text),
        };
        serde_json::to_writer(&mut *sink, &pair)?;
        sink.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}
