//! The corpus-traversing tree search.
//!
//! Nodes hold up to `G` tokens of corpus-valid text. Each simulation selects
//! a leaf by UCT, expands up to `M` children with a stochastic beam over the
//! valid-token sets, rolls each child out to a terminal path by constrained
//! greedy decoding, scores the rollout for answer containment, and
//! backpropagates the value. Deterministic given the configured seed.

mod baseline;

pub use baseline::{beam_search, greedy_search};

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{CorpusIndex, Interval};
use crate::policy::{Policy, PolicyContext, PolicyError};
use crate::token::Bridge;
use crate::value::{ScoreError, ValueScorer};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("uct_score requires a visited parent (n_total >= 1)")]
    UctContract,
    #[error("search space exhausted: every reachable leaf is terminal")]
    Exhausted,
    #[error("dead corpus: search exhausted before producing any trajectory")]
    DeadCorpus,
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    CtMcts,
    Beam,
    Greedy,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::CtMcts => write!(f, "ct_mcts"),
            Strategy::Beam => write!(f, "beam"),
            Strategy::Greedy => write!(f, "greedy"),
        }
    }
}

/// Every search hyperparameter. Serialized into reports so a run can be
/// reproduced from its output; missing fields deserialize to the defaults,
/// so partial config files stay valid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SearchConfig {
    /// Node granularity: maximum tokens per tree node.
    pub granularity: u32,
    /// Children expanded per simulation.
    pub expansions: u32,
    /// Candidate pool for multinomial sampling at expansion.
    pub top_k: u32,
    /// UCT exploration constant.
    pub lambda: f64,
    /// Simulation budget per search.
    pub simulations: u32,
    /// Cap on tokens appended by one rollout.
    pub max_rollout_tokens: u32,
    /// Softmax temperature for expansion sampling.
    pub temperature: f64,
    /// Trajectories returned per search.
    pub paths_returned: u32,
    /// Beam width for the beam-search baseline.
    pub beam_width: u32,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            granularity: 6,
            expansions: 2,
            top_k: 8,
            lambda: 1.0,
            simulations: 30,
            max_rollout_tokens: 64,
            temperature: 1.0,
            paths_returned: 3,
            beam_width: 3,
            strategy: Strategy::CtMcts,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.granularity < 1 {
            return Err(SearchError::Config("granularity must be >= 1".into()));
        }
        if self.expansions < 1 {
            return Err(SearchError::Config("expansions must be >= 1".into()));
        }
        if self.top_k < self.expansions {
            return Err(SearchError::Config("top_k must be >= expansions".into()));
        }
        if self.simulations < 1 {
            return Err(SearchError::Config("simulations must be >= 1".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(SearchError::Config("lambda must be >= 0".into()));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(SearchError::Config("temperature must be > 0".into()));
        }
        if self.paths_returned < 1 {
            return Err(SearchError::Config("paths_returned must be >= 1".into()));
        }
        if self.beam_width < 1 {
            return Err(SearchError::Config("beam_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// A terminal rollout: full decoded text with its score and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub text: String,
    pub token_ids: Vec<u32>,
    pub cum_logprob: f64,
    /// Answer-containment estimate; `None` for unscored baselines.
    pub value: Option<f64>,
    /// Documents containing the trajectory text.
    pub doc_ids: BTreeSet<u32>,
}

/// Everything a search needs besides the tree itself.
pub struct SearchEnv<'a> {
    pub index: &'a CorpusIndex,
    pub bridge: &'a Bridge,
    pub policy: &'a dyn Policy,
    /// Retrieval prompt with the query already substituted.
    pub prompt: &'a str,
}

#[derive(Debug, Clone)]
pub struct Node {
    /// Tokens owned by this node (empty at the root), length <= G.
    pub tokens: Vec<u32>,
    /// Full decoded path from the root.
    pub path_text: String,
    /// Full token sequence from the root.
    pub path_tokens: Vec<u32>,
    /// Interval of the full path.
    pub interval: Interval,
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    pub visits: u64,
    pub value_sum: f64,
    /// Cumulative log-probability of the full path.
    pub cum_logprob: f64,
    /// No valid continuations exist past this node.
    pub terminal: bool,
    /// Subtree fully explored; selection skips it.
    pub exhausted: bool,
    /// Last re-expansion produced no new children.
    pub saturated: bool,
}

impl Node {
    /// Mean value; 0 before the first visit.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// Arena-allocated search tree; index 0 is the root.
pub struct SearchTree {
    nodes: Vec<Node>,
}

impl SearchTree {
    pub fn new(root_interval: Interval) -> Self {
        SearchTree {
            nodes: vec![Node {
                tokens: Vec::new(),
                path_text: String::new(),
                path_tokens: Vec::new(),
                interval: root_interval,
                parent: None,
                children: Vec::new(),
                visits: 0,
                value_sum: 0.0,
                cum_logprob: 0.0,
                terminal: false,
                exhausted: false,
                saturated: false,
            }],
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn add_child(&mut self, parent: u32, tokens: Vec<u32>, text_suffix: &str, interval: Interval, lp_sum: f64, terminal: bool) -> u32 {
        let id = self.nodes.len() as u32;
        let p = &self.nodes[parent as usize];
        let mut path_tokens = p.path_tokens.clone();
        path_tokens.extend_from_slice(&tokens);
        let mut path_text = p.path_text.clone();
        path_text.push_str(text_suffix);
        let cum_logprob = p.cum_logprob + lp_sum;
        self.nodes.push(Node {
            tokens,
            path_text,
            path_tokens,
            interval,
            parent: Some(parent),
            children: Vec::new(),
            visits: 0,
            value_sum: 0.0,
            cum_logprob,
            terminal,
            exhausted: terminal,
            saturated: false,
        });
        self.nodes[parent as usize].children.push(id);
        id
    }

    pub fn mark_terminal(&mut self, id: u32) {
        self.nodes[id as usize].terminal = true;
        self.refresh_exhaustion(id);
    }

    /// Recomputes the exhausted flag at `id` and upward while it changes.
    fn refresh_exhaustion(&mut self, mut id: u32) {
        loop {
            let n = &self.nodes[id as usize];
            let ex = if n.children.is_empty() {
                n.terminal
            } else {
                n.saturated && n.children.iter().all(|&c| self.nodes[c as usize].exhausted)
            };
            if self.nodes[id as usize].exhausted == ex {
                break;
            }
            self.nodes[id as usize].exhausted = ex;
            match self.nodes[id as usize].parent {
                Some(p) => id = p,
                None => break,
            }
        }
    }
}

/// The selection score: `q + lambda * sqrt(ln(n_total) / (1 + n_sa))`.
/// `n_total` is the summed visit count over the parent's children and must
/// be at least 1; callers handle the cold start separately.
pub fn uct_score(q: f64, n_sa: u64, n_total: u64, lambda: f64) -> Result<f64, SearchError> {
    if n_total == 0 {
        return Err(SearchError::UctContract);
    }
    Ok(q + lambda * ((n_total as f64).ln() / (1.0 + n_sa as f64)).sqrt())
}

/// Descends from the root, picking the UCT-maximizing non-exhausted child at
/// every level, until reaching an expandable leaf. Ties break to the child
/// inserted first; a parent whose children are all unvisited also falls back
/// to insertion order.
///
/// A node whose children are all exhausted but which still has untried
/// candidates is returned for re-expansion; multinomial sampling may then
/// draw starts it skipped earlier.
pub fn select(tree: &SearchTree, lambda: f64) -> Result<u32, SearchError> {
    if tree.root().exhausted {
        return Err(SearchError::Exhausted);
    }
    let mut cur = 0u32;
    loop {
        let node = tree.node(cur);
        if node.children.is_empty() {
            return Ok(cur);
        }
        let n_total: u64 = node.children.iter().map(|&c| tree.node(c).visits).sum();
        let mut best: Option<(u32, f64)> = None;
        for &c in &node.children {
            let ch = tree.node(c);
            if ch.exhausted {
                continue;
            }
            let score = if n_total == 0 {
                0.0
            } else {
                uct_score(ch.q(), ch.visits, n_total, lambda)?
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((c, score));
            }
        }
        match best {
            Some((c, _)) => cur = c,
            // Children all exhausted but this subtree is not: revisit the
            // node itself so expansion can sample starts it skipped.
            None => return Ok(cur),
        }
    }
}

struct Beam {
    tokens: Vec<u32>,
    suffix: String,
    interval: Interval,
    lp_sum: f64,
    finished: bool,
    dead: bool,
}

/// Draws up to `m` distinct indices from `weights ∝ exp(lp / temperature)`,
/// renormalizing after each draw. Degenerate weight vectors fall back to
/// insertion order.
fn sample_distinct(lps: &[f64], m: usize, temperature: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let max = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = lps.iter().map(|lp| ((lp - max) / temperature).exp()).collect();
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m.min(lps.len()) {
        let total: f64 = weights.iter().sum();
        let choice = if total > 0.0 && total.is_finite() {
            let mut x = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                x -= w;
                if x <= 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            weights.iter().position(|&w| w >= 0.0).unwrap()
        };
        picked.push(choice);
        weights[choice] = 0.0;
    }
    picked
}

/// Expands `node_id` with up to `M` children found by stochastic beam
/// search: valid next tokens are ranked by policy log-probability, the top-k
/// pool is sampled multinomially for distinct starts, and each start is
/// grown token by token under the corpus constraint, keeping the best `M`
/// partial paths per step, until `G` tokens or a dead end.
///
/// Returns the new child ids. An empty result means the node is terminal.
pub fn expand(
    tree: &mut SearchTree,
    node_id: u32,
    env: &SearchEnv,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>, SearchError> {
    let (path_text, interval) = {
        let n = tree.node(node_id);
        (n.path_text.clone(), n.interval)
    };
    let valid = env.bridge.valid_next_tokens(env.index, interval);
    if valid.is_empty() {
        tree.mark_terminal(node_id);
        return Ok(Vec::new());
    }

    let ids: Vec<u32> = valid.iter().map(|v| v.token_id).collect();
    let ctx = PolicyContext {
        prompt: env.prompt,
        path: &path_text,
    };
    let lps = env.policy.logprobs_for(&ctx, &ids)?;
    let mut candidates: Vec<(u32, Interval, f64)> = valid
        .iter()
        .zip(lps.entries.iter())
        .map(|(v, &(_, lp))| (v.token_id, v.interval, lp))
        .collect();
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    candidates.truncate(cfg.top_k as usize);

    let start_lps: Vec<f64> = candidates.iter().map(|c| c.2).collect();
    let starts = sample_distinct(&start_lps, cfg.expansions as usize, cfg.temperature, rng);

    let tokenizer = env.bridge.tokenizer();
    let mut beams: Vec<Beam> = starts
        .into_iter()
        .map(|i| {
            let (tok, iv, lp) = candidates[i];
            Beam {
                tokens: vec![tok],
                suffix: tokenizer.surface(tok).to_string(),
                interval: iv,
                lp_sum: lp,
                finished: cfg.granularity == 1,
                dead: false,
            }
        })
        .collect();

    while beams.iter().any(|b| !b.finished) {
        let mut pool: Vec<Beam> = Vec::new();
        for beam in beams.drain(..) {
            if beam.finished {
                pool.push(beam);
                continue;
            }
            let valid = env.bridge.valid_next_tokens(env.index, beam.interval);
            if valid.is_empty() {
                pool.push(Beam {
                    finished: true,
                    dead: true,
                    ..beam
                });
                continue;
            }
            let ids: Vec<u32> = valid.iter().map(|v| v.token_id).collect();
            let beam_path = format!("{path_text}{}", beam.suffix);
            let ctx = PolicyContext {
                prompt: env.prompt,
                path: &beam_path,
            };
            let lps = env.policy.logprobs_for(&ctx, &ids)?;
            for (v, &(_, lp)) in valid.iter().zip(lps.entries.iter()) {
                let mut tokens = beam.tokens.clone();
                tokens.push(v.token_id);
                let mut suffix = beam.suffix.clone();
                suffix.push_str(tokenizer.surface(v.token_id));
                pool.push(Beam {
                    finished: tokens.len() as u32 >= cfg.granularity,
                    tokens,
                    suffix,
                    interval: v.interval,
                    lp_sum: beam.lp_sum + lp,
                    dead: false,
                });
            }
        }
        pool.sort_by(|a, b| b.lp_sum.partial_cmp(&a.lp_sum).unwrap());
        pool.truncate(cfg.expansions as usize);
        beams = pool;
    }

    let mut created = Vec::new();
    for beam in beams {
        let duplicate = tree
            .node(node_id)
            .children
            .iter()
            .any(|&c| tree.node(c).tokens == beam.tokens);
        if duplicate {
            continue;
        }
        created.push(tree.add_child(node_id, beam.tokens, &beam.suffix, beam.interval, beam.lp_sum, beam.dead));
    }
    // Saturation: nothing new was produced and every candidate start is
    // already instantiated, so further re-expansions cannot make progress.
    if created.is_empty() {
        let covered = candidates.iter().all(|&(tok, _, _)| {
            tree.node(node_id)
                .children
                .iter()
                .any(|&c| tree.node(c).tokens[0] == tok)
        });
        tree.nodes[node_id as usize].saturated = covered;
    } else {
        tree.nodes[node_id as usize].saturated = false;
    }
    tree.refresh_exhaustion(node_id);
    Ok(created)
}

/// Constrained greedy decode from the node's full path: append the
/// argmax-log-probability valid token until `max_rollout_tokens` have been
/// appended or no valid tokens remain. The trajectory value is left unset.
pub fn rollout(
    tree: &mut SearchTree,
    node_id: u32,
    env: &SearchEnv,
    cfg: &SearchConfig,
) -> Result<Trajectory, SearchError> {
    let (mut text, mut tokens, mut interval, mut cum) = {
        let n = tree.node(node_id);
        (n.path_text.clone(), n.path_tokens.clone(), n.interval, n.cum_logprob)
    };
    let tokenizer = env.bridge.tokenizer();
    let mut appended = 0u32;
    while appended < cfg.max_rollout_tokens {
        let valid = env.bridge.valid_next_tokens(env.index, interval);
        if valid.is_empty() {
            if appended == 0 {
                tree.mark_terminal(node_id);
            }
            break;
        }
        let ids: Vec<u32> = valid.iter().map(|v| v.token_id).collect();
        let ctx = PolicyContext {
            prompt: env.prompt,
            path: &text,
        };
        let lps = env.policy.logprobs_for(&ctx, &ids)?;
        let mut best = 0usize;
        for (i, (_, lp)) in lps.entries.iter().enumerate() {
            if *lp > lps.entries[best].1 {
                best = i;
            }
        }
        let v = &valid[best];
        text.push_str(tokenizer.surface(v.token_id));
        tokens.push(v.token_id);
        interval = v.interval;
        cum += lps.entries[best].1;
        appended += 1;
    }
    let doc_ids = if text.is_empty() {
        BTreeSet::new()
    } else {
        env.index.locate_docs(interval)
    };
    Ok(Trajectory {
        text,
        token_ids: tokens,
        cum_logprob: cum,
        value: None,
        doc_ids,
    })
}

/// Adds one visit and `value` to every node from `leaf` up to the root.
pub fn backpropagate(tree: &mut SearchTree, leaf: u32, value: f64) {
    debug_assert!((0.0..=1.0).contains(&value));
    let mut cur = Some(leaf);
    while let Some(id) = cur {
        let n = &mut tree.nodes[id as usize];
        n.visits += 1;
        n.value_sum += value;
        cur = n.parent;
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub simulations_run: u32,
    pub rollout_count: u32,
    pub nodes_created: u32,
    /// True when the tree ran out of expandable leaves before the budget.
    pub exhausted_early: bool,
}

/// A finished search: the returned trajectories plus the full rollout trace.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub question: String,
    /// Top-P distinct-text trajectories, ordered by (value, cum_logprob) desc.
    pub trajectories: Vec<Trajectory>,
    /// Every scored rollout, in execution order.
    pub rollouts: Vec<Trajectory>,
    pub stats: SearchStats,
}

/// Ranks the rollout pool and keeps the best `p` distinct texts.
fn top_trajectories(pool: &[Trajectory], p: usize) -> Vec<Trajectory> {
    let mut order: Vec<usize> = (0..pool.len()).filter(|&i| !pool[i].text.is_empty()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&pool[a], &pool[b]);
        tb.value
            .partial_cmp(&ta.value)
            .unwrap()
            .then(tb.cum_logprob.partial_cmp(&ta.cum_logprob).unwrap())
    });
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for i in order {
        if seen.insert(pool[i].text.as_str()) {
            out.push(pool[i].clone());
            if out.len() == p {
                break;
            }
        }
    }
    out
}

/// Runs the full search: S simulations of select → expand → rollout → score
/// → backpropagate over a fresh tree, then returns the top-P trajectories
/// from the global rollout pool.
pub fn search(
    question: &str,
    env: &SearchEnv,
    scorer: &dyn ValueScorer,
    cfg: &SearchConfig,
) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let mut tree = SearchTree::new(env.index.root_interval());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rollouts: Vec<Trajectory> = Vec::new();
    let mut stats = SearchStats::default();

    for _ in 0..cfg.simulations {
        let leaf = match select(&tree, cfg.lambda) {
            Ok(l) => l,
            Err(SearchError::Exhausted) => {
                stats.exhausted_early = true;
                break;
            }
            Err(e) => return Err(e),
        };
        stats.simulations_run += 1;
        let children = expand(&mut tree, leaf, env, cfg, &mut rng)?;
        stats.nodes_created += children.len() as u32;
        for child in children {
            let mut traj = rollout(&mut tree, child, env, cfg)?;
            let value = if traj.text.is_empty() {
                0.0
            } else {
                scorer.score(question, &traj.text)?.clamp(0.0, 1.0)
            };
            traj.value = Some(value);
            backpropagate(&mut tree, child, value);
            stats.rollout_count += 1;
            rollouts.push(traj);
        }
    }

    if rollouts.is_empty() {
        return Err(SearchError::DeadCorpus);
    }
    let trajectories = top_trajectories(&rollouts, cfg.paths_returned as usize);
    Ok(SearchOutcome {
        question: question.to_string(),
        trajectories,
        rollouts,
        stats,
    })
}
