//! Compressed full-text index over the corpus: BWT plus rank/occurrence
//! checkpoints and sampled suffix-array positions.
//!
//! The index is built over the per-document *reversed* bodies so that the
//! backward-search primitive extends patterns in forward text order, which
//! is what constrained decoding needs. Each document is terminated by a
//! sentinel byte; matches can never cross document boundaries because the
//! sentinel is not part of any pattern alphabet.

mod occ;
mod sa;
pub mod store;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, SENTINEL};
use crate::text::normalize;
use occ::RankStructure;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("suffix-array sample rate must be >= 1")]
    BadSampleRate,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Half-open range of BWT rows matching some pattern. The width equals the
/// number of occurrences of that pattern in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn width(&self) -> u32 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }
}

/// One indexed document's slice of the concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Segment {
    /// Offset of the reversed body within the indexed sequence.
    pub start: u32,
    /// Body length in bytes (sentinel excluded).
    pub len: u32,
    pub doc_id: u32,
}

/// A single located occurrence, in forward-text coordinates of its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hit {
    pub doc_id: u32,
    /// Byte offset of the last matched byte within the document body.
    pub last_byte: u32,
}

/// Immutable compressed index. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    bwt: Vec<u8>,
    ranks: RankStructure,
    sa_rate: u32,
    /// Bit per BWT row: set when the row's suffix position is stored in `samples`.
    sampled_bits: Vec<u64>,
    /// Set-bit count in `sampled_bits[..w]` for each word `w`.
    sampled_rank: Vec<u32>,
    /// Suffix positions of sampled rows, in row order.
    samples: Vec<u32>,
    /// Document segments sorted by `start`.
    segs: Vec<Segment>,
}

impl CorpusIndex {
    /// Builds the index over every document of `corpus`.
    pub fn build(corpus: &Corpus, sa_rate: u32) -> Result<Self, IndexError> {
        let all: Vec<usize> = (0..corpus.len()).collect();
        Self::build_subset(corpus, &all, sa_rate)
    }

    /// Builds the index over the documents at positions `doc_indices`.
    pub fn build_subset(corpus: &Corpus, doc_indices: &[usize], sa_rate: u32) -> Result<Self, IndexError> {
        if sa_rate == 0 {
            return Err(IndexError::BadSampleRate);
        }
        if doc_indices.is_empty() {
            return Err(IndexError::Corpus(CorpusError::Empty));
        }

        let docs = corpus.docs();
        let total: usize = doc_indices.iter().map(|&i| docs[i].body.len() + 1).sum();
        let mut rev = Vec::with_capacity(total);
        let mut segs = Vec::with_capacity(doc_indices.len());
        for &i in doc_indices {
            let doc = &docs[i];
            segs.push(Segment {
                start: rev.len() as u32,
                len: doc.body.len() as u32,
                doc_id: doc.id,
            });
            rev.extend(doc.body.bytes().rev());
            rev.push(SENTINEL);
        }

        let sa = sa::suffix_array(&rev);
        let n = rev.len();
        let mut bwt = vec![0u8; n];
        for (row, &pos) in sa.iter().enumerate() {
            bwt[row] = if pos == 0 { rev[n - 1] } else { rev[pos as usize - 1] };
        }
        let ranks = RankStructure::new(&bwt);

        // Sample every `sa_rate`-th suffix position plus every segment start
        // (rows preceded by a sentinel), so locate walks stop before ever
        // stepping across a document boundary.
        let words = n / 64 + 1;
        let mut sampled_bits = vec![0u64; words];
        let mut samples_by_row: Vec<(u32, u32)> = Vec::new();
        for (row, &pos) in sa.iter().enumerate() {
            let seg_start = pos == 0 || rev[pos as usize - 1] == SENTINEL;
            if pos % sa_rate == 0 || seg_start {
                sampled_bits[row / 64] |= 1u64 << (row % 64);
                samples_by_row.push((row as u32, pos));
            }
        }
        let mut sampled_rank = vec![0u32; words];
        let mut acc = 0u32;
        for (w, &bits) in sampled_bits.iter().enumerate() {
            sampled_rank[w] = acc;
            acc += bits.count_ones();
        }
        let samples = samples_by_row.into_iter().map(|(_, pos)| pos).collect();

        Ok(CorpusIndex {
            bwt,
            ranks,
            sa_rate,
            sampled_bits,
            sampled_rank,
            samples,
            segs,
        })
    }

    /// Total indexed length: corpus bytes plus one sentinel per document.
    pub fn len(&self) -> u32 {
        self.bwt.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.bwt.is_empty()
    }

    pub fn sa_rate(&self) -> u32 {
        self.sa_rate
    }

    /// Bytes present in the indexed documents (sentinel excluded), ascending.
    pub fn alphabet(&self) -> Vec<u8> {
        self.ranks
            .alphabet()
            .iter()
            .copied()
            .filter(|&b| b != SENTINEL)
            .collect()
    }

    pub fn doc_count(&self) -> usize {
        self.segs.len()
    }

    /// Ids of the indexed documents, in segment order.
    pub fn doc_ids(&self) -> Vec<u32> {
        self.segs.iter().map(|s| s.doc_id).collect()
    }

    /// The interval of the empty pattern: every row.
    pub fn root_interval(&self) -> Interval {
        Interval {
            lo: 0,
            hi: self.len(),
        }
    }

    /// Extends the pattern represented by `iv` with one more byte of forward
    /// text. Returns `None` when the extended pattern does not occur.
    pub fn extend(&self, iv: Interval, byte: u8) -> Option<Interval> {
        if iv.is_empty() || byte == SENTINEL {
            return None;
        }
        let sym = self.ranks.symbol(byte)?;
        let less = self.ranks.less(sym);
        let lo = less + self.ranks.occ(&self.bwt, byte, iv.lo);
        let hi = less + self.ranks.occ(&self.bwt, byte, iv.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }

    /// Interval of a normalized pattern string, extending byte by byte.
    pub fn interval_of(&self, pattern: &str) -> Option<Interval> {
        let mut iv = self.root_interval();
        for &b in pattern.as_bytes() {
            iv = self.extend(iv, b)?;
        }
        Some(iv)
    }

    /// Number of occurrences of `pattern` (normalized before matching).
    pub fn count(&self, pattern: &str) -> u32 {
        let pattern = normalize(pattern);
        match self.interval_of(&pattern) {
            Some(iv) => iv.width(),
            None => 0,
        }
    }

    fn is_sampled(&self, row: u32) -> bool {
        self.sampled_bits[row as usize / 64] >> (row % 64) & 1 == 1
    }

    fn sample_slot(&self, row: u32) -> usize {
        let word = row as usize / 64;
        let before = (self.sampled_bits[word] & ((1u64 << (row % 64)) - 1)).count_ones();
        (self.sampled_rank[word] + before) as usize
    }

    fn lf(&self, row: u32) -> u32 {
        let byte = self.bwt[row as usize];
        let sym = self.ranks.symbol(byte).expect("bwt byte always in alphabet");
        self.ranks.less(sym) + self.ranks.occ(&self.bwt, byte, row)
    }

    /// Suffix position for one BWT row, via the sampled-position walk.
    fn resolve(&self, mut row: u32) -> u32 {
        let mut steps = 0u32;
        while !self.is_sampled(row) {
            row = self.lf(row);
            steps += 1;
        }
        self.samples[self.sample_slot(row)] + steps
    }

    fn seg_of(&self, pos: u32) -> &Segment {
        let i = self
            .segs
            .partition_point(|s| s.start <= pos)
            .checked_sub(1)
            .expect("position before first segment");
        &self.segs[i]
    }

    /// Ids of the documents containing at least one occurrence in `iv`.
    pub fn locate_docs(&self, iv: Interval) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for row in iv.lo..iv.hi {
            let pos = self.resolve(row);
            out.insert(self.seg_of(pos).doc_id);
        }
        out
    }

    /// Every occurrence in `iv`, resolved to forward-text coordinates.
    /// Sorted by (doc, offset); one entry per occurrence.
    pub fn locate_hits(&self, iv: Interval) -> Vec<Hit> {
        let mut out = Vec::with_capacity(iv.width() as usize);
        for row in iv.lo..iv.hi {
            let pos = self.resolve(row);
            let seg = self.seg_of(pos);
            let local_rev = pos - seg.start;
            if local_rev >= seg.len {
                // Sentinel slot; reachable only from intervals that include
                // sentinel-starting rows (never a pattern interval).
                continue;
            }
            out.push(Hit {
                doc_id: seg.doc_id,
                last_byte: seg.len - 1 - local_rev,
            });
        }
        out.sort();
        out
    }
}
