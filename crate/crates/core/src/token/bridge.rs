//! Computing the set of corpus-valid next tokens for a partial path.
//!
//! The bridge pre-builds a byte trie over the tokenizer's usable surfaces.
//! A valid-token query walks the trie while extending the path's index
//! interval edge by edge, so only corpus-reachable prefixes are visited and
//! dead vocabulary entries cost nothing after startup.

use std::sync::Arc;

use crate::corpus::SENTINEL;
use crate::index::{CorpusIndex, Interval};
use crate::text::normalize;
use crate::token::Tokenizer;

/// A token that keeps the path inside the corpus, with the interval of the
/// extended path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidToken {
    pub token_id: u32,
    pub interval: Interval,
}

#[derive(Debug, Default)]
struct TrieNode {
    /// Outgoing edges sorted by byte.
    children: Vec<(u8, u32)>,
    /// Token whose surface ends at this node.
    token: Option<u32>,
}

/// Immutable pairing of a tokenizer with its corpus-usability filter.
pub struct Bridge {
    tokenizer: Arc<dyn Tokenizer>,
    nodes: Vec<TrieNode>,
    /// Bit per token id: set when the surface can never occur in the corpus.
    never_valid: Vec<u64>,
}

impl Bridge {
    /// `index` supplies the alphabet used to pre-filter dead vocabulary
    /// entries; build against the full corpus index, sub-indices only shrink
    /// the alphabet further and are handled by interval extension itself.
    pub fn new(tokenizer: Arc<dyn Tokenizer>, index: &CorpusIndex) -> Self {
        let alphabet = index.alphabet();
        let mut in_alphabet = [false; 256];
        for &b in &alphabet {
            in_alphabet[b as usize] = true;
        }

        let vocab = tokenizer.vocab_size();
        let mut never_valid = vec![0u64; (vocab as usize).div_ceil(64)];
        let mut nodes = vec![TrieNode::default()];
        for id in 0..vocab {
            let surface = tokenizer.surface(id);
            let dead = surface.is_empty()
                || surface
                    .bytes()
                    .any(|b| b == SENTINEL || !in_alphabet[b as usize]);
            if dead {
                never_valid[id as usize / 64] |= 1 << (id % 64);
                continue;
            }
            let mut node = 0u32;
            for b in surface.bytes() {
                node = match nodes[node as usize].children.binary_search_by_key(&b, |e| e.0) {
                    Ok(i) => nodes[node as usize].children[i].1,
                    Err(i) => {
                        let next = nodes.len() as u32;
                        nodes.push(TrieNode::default());
                        nodes[node as usize].children.insert(i, (b, next));
                        next
                    }
                };
            }
            // First id wins if two tokens share a surface.
            let slot = &mut nodes[node as usize].token;
            if slot.is_none() {
                *slot = Some(id);
            }
        }

        Bridge {
            tokenizer,
            nodes,
            never_valid,
        }
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    pub fn is_never_valid(&self, id: u32) -> bool {
        self.never_valid[id as usize / 64] >> (id % 64) & 1 == 1
    }

    /// Every token whose surface extends the path represented by
    /// `path_interval` to a string still present in the corpus. Result is
    /// ordered by surface bytes; may be empty (dead end).
    pub fn valid_next_tokens(&self, index: &CorpusIndex, path_interval: Interval) -> Vec<ValidToken> {
        let mut out = Vec::new();
        let mut stack: Vec<(u32, Interval)> = vec![(0, path_interval)];
        while let Some((node, iv)) = stack.pop() {
            let node = &self.nodes[node as usize];
            if let Some(id) = node.token {
                out.push(ValidToken {
                    token_id: id,
                    interval: iv,
                });
            }
            // Reverse keeps the byte-sorted order under stack popping.
            for &(byte, child) in node.children.iter().rev() {
                if let Some(next) = index.extend(iv, byte) {
                    stack.push((child, next));
                }
            }
        }
        out
    }
}

/// True iff the normalized text occurs as a substring of at least one
/// indexed document. The empty string is trivially valid.
pub fn is_valid_path(index: &CorpusIndex, text: &str) -> bool {
    index.interval_of(&normalize(text)).is_some()
}
