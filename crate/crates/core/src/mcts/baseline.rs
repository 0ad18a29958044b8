//! Deterministic decoding baselines over the same constrained space: a
//! single greedy walk and a cumulative-log-probability beam.

use std::collections::BTreeSet;

use crate::index::Interval;
use crate::policy::PolicyContext;

use super::{SearchConfig, SearchEnv, SearchError, Trajectory};

struct Path {
    text: String,
    tokens: Vec<u32>,
    interval: Interval,
    cum_logprob: f64,
    finished: bool,
}

fn finish(env: &SearchEnv, path: Path) -> Trajectory {
    let doc_ids = if path.text.is_empty() {
        BTreeSet::new()
    } else {
        env.index.locate_docs(path.interval)
    };
    Trajectory {
        text: path.text,
        token_ids: path.tokens,
        cum_logprob: path.cum_logprob,
        value: None,
        doc_ids,
    }
}

/// Single constrained greedy decode from the empty path. No value model is
/// involved; the result is unscored.
pub fn greedy_search(env: &SearchEnv, cfg: &SearchConfig) -> Result<Trajectory, SearchError> {
    let tokenizer = env.bridge.tokenizer();
    let mut path = Path {
        text: String::new(),
        tokens: Vec::new(),
        interval: env.index.root_interval(),
        cum_logprob: 0.0,
        finished: false,
    };
    for _ in 0..cfg.max_rollout_tokens {
        let valid = env.bridge.valid_next_tokens(env.index, path.interval);
        if valid.is_empty() {
            break;
        }
        let ids: Vec<u32> = valid.iter().map(|v| v.token_id).collect();
        let ctx = PolicyContext {
            prompt: env.prompt,
            path: &path.text,
        };
        let lps = env.policy.logprobs_for(&ctx, &ids)?;
        let mut best = 0usize;
        for (i, (_, lp)) in lps.entries.iter().enumerate() {
            if *lp > lps.entries[best].1 {
                best = i;
            }
        }
        let v = &valid[best];
        path.text.push_str(tokenizer.surface(v.token_id));
        path.tokens.push(v.token_id);
        path.interval = v.interval;
        path.cum_logprob += lps.entries[best].1;
    }
    if path.text.is_empty() {
        return Err(SearchError::DeadCorpus);
    }
    Ok(finish(env, path))
}

/// Deterministic beam search over valid tokens, ranked by cumulative
/// log-probability, capped at `max_rollout_tokens` tokens per path. Returns
/// the final beams best-first, unscored.
pub fn beam_search(env: &SearchEnv, beam_width: u32, cfg: &SearchConfig) -> Result<Vec<Trajectory>, SearchError> {
    if beam_width < 1 {
        return Err(SearchError::Config("beam_width must be >= 1".into()));
    }
    let tokenizer = env.bridge.tokenizer();
    let mut beams = vec![Path {
        text: String::new(),
        tokens: Vec::new(),
        interval: env.index.root_interval(),
        cum_logprob: 0.0,
        finished: false,
    }];

    while beams.iter().any(|b| !b.finished) {
        let mut pool: Vec<Path> = Vec::new();
        for beam in beams.drain(..) {
            if beam.finished {
                pool.push(beam);
                continue;
            }
            let valid = env.bridge.valid_next_tokens(env.index, beam.interval);
            if valid.is_empty() {
                pool.push(Path {
                    finished: true,
                    ..beam
                });
                continue;
            }
            let ids: Vec<u32> = valid.iter().map(|v| v.token_id).collect();
            let ctx = PolicyContext {
                prompt: env.prompt,
                path: &beam.text,
            };
            let lps = env.policy.logprobs_for(&ctx, &ids)?;
            for (v, &(_, lp)) in valid.iter().zip(lps.entries.iter()) {
                let mut text = beam.text.clone();
                text.push_str(tokenizer.surface(v.token_id));
                let mut tokens = beam.tokens.clone();
                tokens.push(v.token_id);
                pool.push(Path {
                    finished: tokens.len() as u32 >= cfg.max_rollout_tokens,
                    text,
                    tokens,
                    interval: v.interval,
                    cum_logprob: beam.cum_logprob + lp,
                });
            }
        }
        pool.sort_by(|a, b| b.cum_logprob.partial_cmp(&a.cum_logprob).unwrap());
        pool.truncate(beam_width as usize);
        beams = pool;
    }

    let out: Vec<Trajectory> = beams
        .into_iter()
        .filter(|b| !b.text.is_empty())
        .map(|b| finish(env, b))
        .collect();
    if out.is_empty() {
        return Err(SearchError::DeadCorpus);
    }
    Ok(out)
}
