//! Shared test support: the naive-scan oracle the index is checked against,
//! random corpus/pattern generators, and the synthetic evaluation fixtures.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ctsearch::corpus::{Corpus, Document};
use ctsearch::eval::QAExample;

/// Naive substring occurrence count over normalized bodies, counting
/// overlapping matches. Independent of the index implementation.
pub fn naive_count(docs: &[Document], pattern: &str) -> u32 {
    if pattern.is_empty() {
        return 0;
    }
    let mut total = 0;
    for doc in docs {
        let mut start = 0;
        while let Some(p) = doc.body[start..].find(pattern) {
            total += 1;
            start += p + 1;
        }
    }
    total
}

/// Ids of documents containing the pattern, by naive scan.
pub fn naive_locate(docs: &[Document], pattern: &str) -> BTreeSet<u32> {
    docs.iter()
        .filter(|d| !pattern.is_empty() && d.body.contains(pattern))
        .map(|d| d.id)
        .collect()
}

const WORD_POOL: [&str; 42] = [
    "ash", "bay", "cedar", "dune", "elm", "fen", "glen", "heath", "isle", "knoll", "loch",
    "mesa", "ness", "oak", "pine", "quay", "reef", "shoal", "tarn", "vale", "wold", "yew",
    "amber", "basalt", "chalk", "delta", "ember", "flint", "gorge", "humus", "iris", "jade",
    "karst", "lava", "marl", "nickel", "ochre", "pumice", "quartz", "ridge", "slate", "tuff",
];

/// Random word-based corpus: `n_docs` documents of `min_words..=max_words`
/// words drawn from a small pool, so patterns repeat across documents.
pub fn random_corpus(rng: &mut ChaCha8Rng, n_docs: usize, min_words: usize, max_words: usize) -> Corpus {
    let docs: Vec<(u32, String, String)> = (0..n_docs)
        .map(|i| {
            let len = rng.gen_range(min_words..=max_words);
            let body: Vec<&str> = (0..len).map(|_| *WORD_POOL.choose(rng).unwrap()).collect();
            (i as u32, format!("doc {i}"), body.join(" "))
        })
        .collect();
    Corpus::from_raw(docs).unwrap()
}

/// Samples a pattern: mostly real substrings of corpus documents, sometimes
/// random word strings (which may cross would-be document boundaries or not
/// occur at all).
pub fn random_pattern(rng: &mut ChaCha8Rng, corpus: &Corpus) -> String {
    match rng.gen_range(0..10) {
        // Substring of one document (always present).
        0..=5 => {
            let doc = &corpus.docs()[rng.gen_range(0..corpus.len())];
            let bytes = doc.body.as_bytes();
            let start = rng.gen_range(0..bytes.len());
            let max_len = (bytes.len() - start).min(30);
            let len = rng.gen_range(1..=max_len);
            String::from_utf8_lossy(&bytes[start..start + len]).into_owned()
        }
        // Suffix of one document followed by a prefix of another: a string
        // crossing a would-be document boundary, which must never match.
        6..=7 => {
            let a = &corpus.docs()[rng.gen_range(0..corpus.len())];
            let b = &corpus.docs()[rng.gen_range(0..corpus.len())];
            let tail_len = rng.gen_range(1..=a.body.len().min(8));
            let head_len = rng.gen_range(1..=b.body.len().min(8));
            format!(
                "{}{}",
                &a.body[a.body.len() - tail_len..],
                &b.body[..head_len]
            )
        }
        // Random words; may or may not occur.
        _ => {
            let len = rng.gen_range(1..=3);
            let words: Vec<&str> = (0..len).map(|_| *WORD_POOL.choose(rng).unwrap()).collect();
            words.join(" ")
        }
    }
}

/// Synthetic filler word unique to (cluster, slot).
fn filler(cluster: usize, slot: usize) -> String {
    format!("f{cluster}x{slot}")
}

/// A questions-plus-corpus fixture.
pub struct Fixture {
    pub corpus: Corpus,
    pub examples: Vec<QAExample>,
}

/// Trap fixture: per question, four decoy documents whose bodies start with
/// the globally dominant word "the", and one answer document reachable only
/// through a first token the corpus n-gram policy ranks below the trap
/// branch. Cluster isolation comes from a per-question subject marker in
/// every title.
pub fn trap_fixture(n_questions: usize) -> Fixture {
    let mut docs: Vec<(u32, String, String)> = Vec::new();
    let mut examples = Vec::new();
    let mut next_id = 0u32;
    for q in 0..n_questions {
        let subject = format!("sector{q:03}");
        let gold = format!("omega{q:03} capsule{q:03}");
        for t in 0..4 {
            let body = format!(
                "the {} {} holds {} routine {} entries near {} and {}",
                filler(q, t * 10),
                filler(q, t * 10 + 1),
                filler(q, t * 10 + 2),
                filler(q, t * 10 + 3),
                filler(q, t * 10 + 4),
                filler(q, t * 10 + 5),
            );
            docs.push((next_id, format!("{subject} archive {t}"), body));
            next_id += 1;
        }
        // Answer document: no "the", unique opener, gold phrase inside.
        let body = format!(
            "zq{q:03} report notes {} finding {gold} confirmed by {} survey",
            filler(q, 90),
            filler(q, 91),
        );
        docs.push((next_id, format!("{subject} report"), body));
        next_id += 1;

        examples.push(QAExample {
            id: format!("trap-{q:03}"),
            question: format!("what does the {subject} report confirm?"),
            subject: Some(subject),
            golden_answers: vec![gold],
        });
    }
    Fixture {
        corpus: Corpus::from_raw(docs).unwrap(),
        examples,
    }
}

/// Planted-answer fixture for end-to-end reasoning: one answer document per
/// question carrying a unique gold phrase, plus shared distractors.
pub fn planted_fixture(n_questions: usize) -> Fixture {
    let mut docs: Vec<(u32, String, String)> = Vec::new();
    let mut examples = Vec::new();
    let mut next_id = 0u32;
    for q in 0..n_questions {
        let subject = format!("relic{q:03}");
        let gold = format!("amulet{q:03}");
        let body = format!(
            "the {subject} chamber catalog lists treasure {gold} stored beside {} and {}",
            filler(q, 1),
            filler(q, 2),
        );
        docs.push((next_id, format!("{subject} catalog"), body));
        next_id += 1;
        let body = format!(
            "the {subject} hallway map marks {} passages toward {} gates",
            filler(q, 3),
            filler(q, 4),
        );
        docs.push((next_id, format!("{subject} map"), body));
        next_id += 1;

        examples.push(QAExample {
            id: format!("planted-{q:03}"),
            question: format!("which treasure does the {subject} catalog list?"),
            subject: Some(subject),
            golden_answers: vec![gold],
        });
    }
    Fixture {
        corpus: Corpus::from_raw(docs).unwrap(),
        examples,
    }
}

/// Width-calibrated fixture for the expansion-width sweep: each question's
/// cluster has `width` decoy openings plus one answer opening, with flat
/// policy probabilities, so hit rate tracks how many openings a search can
/// try within its budget.
pub fn width_fixture(n_questions: usize, width: usize) -> Fixture {
    let mut docs: Vec<(u32, String, String)> = Vec::new();
    let mut examples = Vec::new();
    let mut next_id = 0u32;
    for q in 0..n_questions {
        let subject = format!("grid{q:03}");
        let gold = format!("beacon{q:03} signal{q:03}");
        for w in 0..width {
            let body = format!(
                "gate{q:03}n{w:02} corridor leads past {} toward {} junction",
                filler(q, w * 2),
                filler(q, w * 2 + 1),
            );
            docs.push((next_id, format!("{subject} corridor {w}"), body));
            next_id += 1;
        }
        let body = format!(
            "gate{q:03}answer corridor reveals {gold} behind {} panel",
            filler(q, 900),
        );
        docs.push((next_id, format!("{subject} vault"), body));
        next_id += 1;

        examples.push(QAExample {
            id: format!("width-{q:03}"),
            question: format!("what does the {subject} vault reveal?"),
            subject: Some(subject),
            golden_answers: vec![gold],
        });
    }
    Fixture {
        corpus: Corpus::from_raw(docs).unwrap(),
        examples,
    }
}

/// Binary-branching fixture for the expansion-width sweep: each question's
/// cluster is a full binary tree of depth `depth` spelled into documents,
/// one per leaf, so every interior position has exactly two valid
/// continuations. One leaf carries the gold phrase. With only two options
/// per node, widths beyond 2 cannot add children anywhere below the root.
pub fn binary_fixture(n_questions: usize, depth: usize) -> Fixture {
    let mut docs: Vec<(u32, String, String)> = Vec::new();
    let mut examples = Vec::new();
    let mut next_id = 0u32;
    for q in 0..n_questions {
        let subject = format!("grid{q:03}");
        let gold = format!("beacon{q:03} signal{q:03}");
        // The answer leaf alternates branches so the default tie-break walk
        // (always 'a') never reaches it from shallow nodes.
        let answer_path: String = (0..depth).map(|j| if j % 2 == 0 { 'b' } else { 'a' }).collect();
        // Leaves that earn partial credit: for every level, the default
        // ('a'-walk) leaf of the subtree that branches off the answer path.
        // Probing near the answer path then yields a value gradient.
        let mut guide_leaves: Vec<String> = Vec::new();
        for j in 1..depth {
            let mut p: String = answer_path[..j - 1].to_string();
            p.push(if answer_path.as_bytes()[j - 1] == b'a' { 'b' } else { 'a' });
            while p.len() < depth {
                p.push('a');
            }
            guide_leaves.push(p);
        }
        let gold_head = format!("beacon{q:03}");
        for leaf in 0..(1usize << depth) {
            let path: String = (0..depth)
                .map(|j| if leaf >> (depth - 1 - j) & 1 == 1 { 'b' } else { 'a' })
                .collect();
            let mut words = vec![format!("probe{q:03}")];
            for j in 1..=depth {
                words.push(format!("l{j}{}", &path[..j]));
            }
            if path == answer_path {
                words.push(gold.clone());
            } else if guide_leaves.contains(&path) {
                words.push(gold_head.clone());
            } else {
                words.push(format!("t{q:03}x{leaf:02}"));
            }
            docs.push((next_id, format!("{subject} route {leaf}"), words.join(" ")));
            next_id += 1;
        }
        examples.push(QAExample {
            id: format!("bin-{q:03}"),
            question: format!("what does the {subject} vault reveal?"),
            subject: Some(subject),
            golden_answers: vec![gold],
        });
    }
    Fixture {
        corpus: Corpus::from_raw(docs).unwrap(),
        examples,
    }
}

/// Granularity-sweep fixture. Each question's cluster is one long "tunnel"
/// document (an unbranching chain of unique words with the gold phrase deep
/// inside) plus a few short decoy documents. Deeper trees tunnel toward the
/// gold in a few moves and finish their rollouts near the document tail;
/// shallow trees pay full-length rollouts from near the root every
/// simulation.
pub struct TunnelParams {
    pub n_questions: usize,
    pub n_decoys: usize,
    pub decoy_words: usize,
    pub tunnel_words: usize,
    pub gold_offset: usize,
}

impl Default for TunnelParams {
    fn default() -> Self {
        TunnelParams {
            n_questions: 12,
            n_decoys: 6,
            decoy_words: 6,
            tunnel_words: 60,
            gold_offset: 40,
        }
    }
}

pub fn granularity_fixture(p: &TunnelParams) -> Fixture {
    let mut docs: Vec<(u32, String, String)> = Vec::new();
    let mut examples = Vec::new();
    let mut next_id = 0u32;
    for q in 0..p.n_questions {
        let subject = format!("strata{q:03}");
        let gold = format!("zlode{q:03} zvein{q:03}");
        // Tunnel: "the maa<q> z..002 z..003 ... gold ... z..end". Chain words
        // sort late so the root's top-k pool holds only the opener, the
        // second word and decoy words; every entry point is shallow.
        let mut words = vec!["the".to_string(), format!("maa{q:03}")];
        for j in 2..p.tunnel_words {
            if j == p.gold_offset {
                words.push(gold.clone());
            } else {
                words.push(format!("zw{q:03}p{j:03}"));
            }
        }
        docs.push((next_id, format!("{subject} tunnel"), words.join(" ")));
        next_id += 1;
        for d in 0..p.n_decoys {
            let mut words = vec!["the".to_string()];
            for j in 0..p.decoy_words {
                words.push(format!("md{q:03}x{d}y{j}"));
            }
            docs.push((next_id, format!("{subject} decoy {d}"), words.join(" ")));
            next_id += 1;
        }
        examples.push(QAExample {
            id: format!("gran-{q:03}"),
            question: format!("what does the {subject} tunnel hide?"),
            subject: Some(subject),
            golden_answers: vec![gold],
        });
    }
    Fixture {
        corpus: Corpus::from_raw(docs).unwrap(),
        examples,
    }
}

/// Writes a fixture to JSONL files for CLI-level tests. Returns the paths.
pub fn write_fixture_files(
    fixture: &Fixture,
    dir: &std::path::Path,
) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus_path = dir.join("corpus.jsonl");
    let dataset_path = dir.join("dataset.jsonl");
    let mut corpus = String::new();
    for d in fixture.corpus.docs() {
        corpus.push_str(
            &serde_json::json!({"id": d.id, "title": d.title, "text": d.body}).to_string(),
        );
        corpus.push('\n');
    }
    std::fs::write(&corpus_path, corpus).unwrap();
    let mut dataset = String::new();
    for e in &fixture.examples {
        dataset.push_str(&serde_json::to_string(e).unwrap());
        dataset.push('\n');
    }
    std::fs::write(&dataset_path, dataset).unwrap();
    (corpus_path, dataset_path)
}
