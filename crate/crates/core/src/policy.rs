//! Next-token scoring and free-form generation behind one pluggable trait.
//!
//! The built-in policies are deterministic and corpus-derived so the whole
//! engine runs and tests without a model server; the remote client lives in
//! [`crate::remote`].

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::corpus::Corpus;
use crate::token::SharedTokenizer;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("token id {0} unknown to the model")]
    UnknownToken(u32),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("operation not supported by this policy: {0}")]
    Unsupported(&'static str),
}

/// Conditioning text for a constrained-decoding step.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    /// Retrieval prompt with the query substituted.
    pub prompt: &'a str,
    /// Current constrained path.
    pub path: &'a str,
}

/// Log-probabilities for a requested candidate subset, in request order.
/// Values are logs of the model's full conditional distribution, not
/// renormalized over the subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLogProbs {
    pub entries: Vec<(u32, f64)>,
}

impl SparseLogProbs {
    pub fn get(&self, id: u32) -> Option<f64> {
        self.entries.iter().find(|(t, _)| *t == id).map(|(_, lp)| *lp)
    }
}

pub trait Policy: Send + Sync {
    fn logprobs_for(&self, ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError>;

    /// Free-form continuation, truncated at the first stop string (stop
    /// included) or at the backend's token limit.
    fn generate(&self, prompt: &str, stop: &[String], max_tokens: u32) -> Result<String, PolicyError>;
}

pub type SharedPolicy = Arc<dyn Policy>;

/// Truncates `text` at the earliest occurrence of any stop string, keeping
/// the stop itself.
pub fn truncate_at_stop(text: &str, stop: &[String]) -> String {
    let mut cut = usize::MAX;
    for s in stop {
        if s.is_empty() {
            continue;
        }
        if let Some(i) = text.find(s.as_str()) {
            cut = cut.min(i + s.len());
        }
    }
    if cut == usize::MAX {
        text.to_string()
    } else {
        text[..cut].to_string()
    }
}

/// Assigns every token probability 1/V regardless of context.
pub struct UniformPolicy {
    vocab_size: u32,
}

impl UniformPolicy {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size > 0);
        UniformPolicy { vocab_size }
    }
}

impl Policy for UniformPolicy {
    fn logprobs_for(&self, _ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError> {
        let lp = -(f64::from(self.vocab_size)).ln();
        let entries = candidates
            .iter()
            .map(|&id| {
                if id >= self.vocab_size {
                    Err(PolicyError::UnknownToken(id))
                } else {
                    Ok((id, lp))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SparseLogProbs { entries })
    }

    fn generate(&self, _prompt: &str, _stop: &[String], _max_tokens: u32) -> Result<String, PolicyError> {
        Err(PolicyError::Unsupported("uniform policy cannot generate text"))
    }
}

/// Smoothing mode for [`NgramPolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Add-one over the vocabulary; every token gets nonzero probability.
    AddOne,
    /// Raw relative frequencies; unseen continuations get a finite floor.
    None,
}

/// Log-probability floor for unseen continuations under raw counts.
pub const RAW_FLOOR: f64 = -1.0e3;

#[derive(Debug, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Token n-gram model fitted on the corpus, with shortening backoff to the
/// longest observed context. Conditions only on the constrained path; the
/// natural-language prompt never aligns with corpus n-grams and is ignored.
pub struct NgramPolicy {
    tokenizer: SharedTokenizer,
    order: usize,
    smoothing: Smoothing,
    vocab_size: u32,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

impl NgramPolicy {
    pub const DEFAULT_ORDER: usize = 3;

    pub fn from_corpus(corpus: &Corpus, tokenizer: SharedTokenizer, order: usize, smoothing: Smoothing) -> Self {
        assert!(order >= 1);
        let vocab_size = tokenizer.vocab_size();
        let mut counts: HashMap<Vec<u32>, ContextCounts> = HashMap::new();
        for doc in corpus.docs() {
            let ids = tokenizer
                .encode(&doc.body)
                .expect("corpus-derived tokenizer must encode its own corpus");
            for i in 0..ids.len() {
                for ctx_len in 0..order.min(i + 1) {
                    let ctx = ids[i - ctx_len..i].to_vec();
                    let slot = counts.entry(ctx).or_default();
                    slot.total += 1;
                    *slot.next.entry(ids[i]).or_default() += 1;
                }
            }
        }
        counts.entry(Vec::new()).or_default();
        NgramPolicy {
            tokenizer,
            order,
            smoothing,
            vocab_size,
            counts,
        }
    }

    /// Longest observed suffix of the path's token sequence, capped at
    /// order - 1 tokens.
    fn context_of(&self, path: &str) -> Vec<u32> {
        let ids = self.tokenizer.encode(path).unwrap_or_default();
        let max = self.order - 1;
        let start = ids.len().saturating_sub(max);
        let mut ctx = &ids[start..];
        while !ctx.is_empty() && !self.counts.contains_key(ctx) {
            ctx = &ctx[1..];
        }
        ctx.to_vec()
    }

    fn logprob(&self, ctx: &[u32], token: u32) -> f64 {
        let slot = &self.counts[ctx];
        let c = slot.next.get(&token).copied().unwrap_or(0);
        match self.smoothing {
            Smoothing::AddOne => {
                (((c + 1) as f64) / (slot.total as f64 + f64::from(self.vocab_size))).ln()
            }
            Smoothing::None => {
                if c == 0 || slot.total == 0 {
                    RAW_FLOOR
                } else {
                    ((c as f64) / (slot.total as f64)).ln()
                }
            }
        }
    }
}

impl Policy for NgramPolicy {
    fn logprobs_for(&self, ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError> {
        let context = self.context_of(ctx.path);
        let entries = candidates
            .iter()
            .map(|&id| {
                if id >= self.vocab_size {
                    Err(PolicyError::UnknownToken(id))
                } else {
                    Ok((id, self.logprob(&context, id)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SparseLogProbs { entries })
    }

    fn generate(&self, _prompt: &str, _stop: &[String], _max_tokens: u32) -> Result<String, PolicyError> {
        Err(PolicyError::Unsupported("n-gram policy cannot generate text"))
    }
}

/// Replays a fixed queue of generations; token scoring delegates to an inner
/// policy. Used to drive the reasoning loop deterministically in tests and
/// offline runs.
pub struct ScriptedPolicy {
    inner: SharedPolicy,
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedPolicy {
    pub fn new(inner: SharedPolicy, script: Vec<String>) -> Self {
        ScriptedPolicy {
            inner,
            queue: Mutex::new(script.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl Policy for ScriptedPolicy {
    fn logprobs_for(&self, ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError> {
        self.inner.logprobs_for(ctx, candidates)
    }

    fn generate(&self, _prompt: &str, stop: &[String], _max_tokens: u32) -> Result<String, PolicyError> {
        let next = self
            .queue
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(PolicyError::ScriptExhausted)?;
        Ok(truncate_at_stop(&next, stop))
    }
}

/// Scripted generations keyed by a substring of the prompt (typically the
/// question), so one policy instance can serve many concurrent reasoning
/// episodes deterministically.
pub struct ScriptBookPolicy {
    inner: SharedPolicy,
    book: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ScriptBookPolicy {
    pub fn new(book: HashMap<String, Vec<String>>, inner: SharedPolicy) -> Self {
        ScriptBookPolicy {
            inner,
            book: Mutex::new(book.into_iter().map(|(k, v)| (k, v.into())).collect()),
        }
    }

    /// Accepts either a JSON array (one shared queue, matched by any prompt)
    /// or an object mapping prompt substrings to queues.
    pub fn from_json(data: &str, inner: SharedPolicy) -> Result<Self, PolicyError> {
        if let Ok(list) = serde_json::from_str::<Vec<String>>(data) {
            let mut book = HashMap::new();
            book.insert(String::new(), list);
            return Ok(Self::new(book, inner));
        }
        let book: HashMap<String, Vec<String>> = serde_json::from_str(data)
            .map_err(|e| PolicyError::Protocol(format!("invalid script file: {e}")))?;
        Ok(Self::new(book, inner))
    }
}

impl Policy for ScriptBookPolicy {
    fn logprobs_for(&self, ctx: &PolicyContext, candidates: &[u32]) -> Result<SparseLogProbs, PolicyError> {
        self.inner.logprobs_for(ctx, candidates)
    }

    fn generate(&self, prompt: &str, stop: &[String], _max_tokens: u32) -> Result<String, PolicyError> {
        let mut book = self.book.lock().unwrap();
        let key = book
            .keys()
            .filter(|k| prompt.contains(k.as_str()))
            .max_by_key(|k| k.len())
            .cloned()
            .ok_or(PolicyError::ScriptExhausted)?;
        let queue = book.get_mut(&key).expect("key just found");
        let next = queue.pop_front().ok_or(PolicyError::ScriptExhausted)?;
        Ok(truncate_at_stop(&next, stop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::CharTokenizer;

    fn abracadabra() -> (Corpus, SharedTokenizer) {
        let corpus = Corpus::from_raw(vec![(0u32, "t", "abracadabra")]).unwrap();
        let tok: SharedTokenizer = Arc::new(CharTokenizer::from_corpus(&corpus));
        (corpus, tok)
    }

    #[test]
    fn uniform_assigns_ln_one_over_v() {
        let p = UniformPolicy::new(16);
        let ctx = PolicyContext { prompt: "x", path: "" };
        let lps = p.logprobs_for(&ctx, &[0, 3, 7, 15]).unwrap();
        assert_eq!(lps.entries.len(), 4);
        for (_, lp) in lps.entries {
            assert!((lp - (1.0f64 / 16.0).ln()).abs() < 1e-12);
        }
        assert!(matches!(
            p.logprobs_for(&ctx, &[16]),
            Err(PolicyError::UnknownToken(16))
        ));
    }

    #[test]
    fn bigram_follows_corpus_counts() {
        let (corpus, tok) = abracadabra();
        let p = NgramPolicy::from_corpus(&corpus, Arc::clone(&tok), 2, Smoothing::None);
        let r = tok.encode("r").unwrap()[0];
        let a = tok.encode("a").unwrap()[0];
        let ctx = PolicyContext { prompt: "", path: "ab" };
        let lps = p.logprobs_for(&ctx, &[r, a]).unwrap();
        // Both occurrences of "b" continue with "r".
        assert!((lps.get(r).unwrap() - 0.0).abs() < 1e-12);
        assert_eq!(lps.get(a).unwrap(), RAW_FLOOR);
    }

    #[test]
    fn raw_probabilities_sum_to_one_over_observed_continuations() {
        let (corpus, tok) = abracadabra();
        let p = NgramPolicy::from_corpus(&corpus, Arc::clone(&tok), 3, Smoothing::None);
        for path in ["", "a", "ab", "abra", "ra"] {
            let all: Vec<u32> = (0..tok.vocab_size()).collect();
            let ctx = PolicyContext { prompt: "", path };
            let lps = p.logprobs_for(&ctx, &all).unwrap();
            let sum: f64 = lps
                .entries
                .iter()
                .map(|(_, lp)| *lp)
                .filter(|lp| *lp > RAW_FLOOR)
                .map(f64::exp)
                .sum();
            assert!((sum - 1.0).abs() < 1e-9, "path {path:?} sum {sum}");
        }
    }

    #[test]
    fn add_one_probabilities_sum_to_one_over_vocab() {
        let (corpus, tok) = abracadabra();
        let p = NgramPolicy::from_corpus(&corpus, Arc::clone(&tok), 3, Smoothing::AddOne);
        for path in ["", "abra", "zzz-unencodable"] {
            let all: Vec<u32> = (0..tok.vocab_size()).collect();
            let ctx = PolicyContext { prompt: "", path };
            let lps = p.logprobs_for(&ctx, &all).unwrap();
            let sum: f64 = lps.entries.iter().map(|(_, lp)| lp.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9, "path {path:?} sum {sum}");
        }
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let (corpus, tok) = abracadabra();
        let p = NgramPolicy::from_corpus(&corpus, Arc::clone(&tok), 3, Smoothing::AddOne);
        let all: Vec<u32> = (0..tok.vocab_size()).collect();
        let ctx = PolicyContext { prompt: "", path: "abra" };
        assert_eq!(p.logprobs_for(&ctx, &all).unwrap(), p.logprobs_for(&ctx, &all).unwrap());
    }

    #[test]
    fn script_book_routes_by_prompt_substring() {
        let (corpus, tok) = abracadabra();
        let inner: SharedPolicy = Arc::new(NgramPolicy::from_corpus(&corpus, tok, 2, Smoothing::AddOne));
        let mut book = HashMap::new();
        book.insert("question A".to_string(), vec!["<answer> one </answer>".to_string()]);
        book.insert("question B".to_string(), vec!["<answer> two </answer>".to_string()]);
        let p = ScriptBookPolicy::new(book, inner);
        assert_eq!(
            p.generate("prompt with question B inside", &[], 8).unwrap(),
            "<answer> two </answer>"
        );
        assert_eq!(
            p.generate("prompt with question A inside", &[], 8).unwrap(),
            "<answer> one </answer>"
        );
        assert!(matches!(
            p.generate("prompt with question B inside", &[], 8),
            Err(PolicyError::ScriptExhausted)
        ));
    }

    #[test]
    fn scripted_replays_and_truncates() {
        let (corpus, tok) = abracadabra();
        let inner: SharedPolicy = Arc::new(NgramPolicy::from_corpus(&corpus, tok, 2, Smoothing::AddOne));
        let p = ScriptedPolicy::new(
            inner,
            vec!["<answer> x </answer>".into(), "a <search> q </search> trailing".into()],
        );
        assert_eq!(p.generate("", &[], 64).unwrap(), "<answer> x </answer>");
        assert_eq!(
            p.generate("", &["</search>".to_string()], 64).unwrap(),
            "a <search> q </search>"
        );
        assert!(matches!(p.generate("", &[], 64), Err(PolicyError::ScriptExhausted)));
    }
}
