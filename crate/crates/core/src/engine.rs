//! Assembly of index, tokenizer bridge, policy and scorer into one
//! retrieval engine, with strategy dispatch.

use std::sync::Arc;

use crate::index::CorpusIndex;
use crate::mcts::{
    beam_search, greedy_search, search, SearchConfig, SearchEnv, SearchError, SearchOutcome,
    SearchStats, Strategy, Trajectory,
};
use crate::policy::SharedPolicy;
use crate::select::{select_documents, Evidence, SelectError, SelectStrategy};
use crate::subject::SubjectIndexCache;
use crate::token::Bridge;
use crate::value::SharedScorer;

/// Default prompt templates shipped with the engine.
pub mod templates {
    pub const REASONING: &str = include_str!("../templates/reasoning.txt");
    pub const RETRIEVAL: &str = include_str!("../templates/retrieval.txt");
    pub const VALUE: &str = include_str!("../templates/value.txt");
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
}

/// One retrieval call's result: ranked trajectories plus selected evidence.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub trajectories: Vec<Trajectory>,
    pub evidence: Vec<Evidence>,
    /// Every scored rollout (empty for the deterministic baselines).
    pub rollouts: Vec<Trajectory>,
    pub stats: SearchStats,
}

/// The retriever-free retrieval engine.
pub struct Engine {
    cache: SubjectIndexCache,
    bridge: Bridge,
    policy: SharedPolicy,
    scorer: SharedScorer,
    retrieval_template: String,
    pub select_strategy: SelectStrategy,
    pub window_chars: usize,
}

impl Engine {
    pub fn new(
        cache: SubjectIndexCache,
        bridge: Bridge,
        policy: SharedPolicy,
        scorer: SharedScorer,
    ) -> Self {
        Engine {
            cache,
            bridge,
            policy,
            scorer,
            retrieval_template: templates::RETRIEVAL.to_string(),
            select_strategy: SelectStrategy::CompleteDocument,
            window_chars: crate::select::DEFAULT_WINDOW_CHARS,
        }
    }

    pub fn with_retrieval_template(mut self, template: String) -> Self {
        self.retrieval_template = template;
        self
    }

    pub fn cache(&self) -> &SubjectIndexCache {
        &self.cache
    }

    pub fn policy(&self) -> &SharedPolicy {
        &self.policy
    }

    /// The retrieval prompt for one query, few-shot template with the
    /// subject/question pair substituted.
    pub fn retrieval_prompt(&self, question: &str, subject: Option<&str>) -> String {
        let query_text = match subject {
            Some(s) if !s.is_empty() => format!("subject: {s}, question: {question}"),
            _ => question.to_string(),
        };
        self.retrieval_template.replace("{question}", &query_text)
    }

    /// Runs the configured strategy and converts the resulting trajectories
    /// into evidence.
    pub fn retrieve(
        &self,
        question: &str,
        subject: Option<&str>,
        cfg: &SearchConfig,
    ) -> Result<Retrieval, EngineError> {
        let index: Arc<CorpusIndex> = match subject {
            Some(s) => self.cache.subject_index(s)?,
            None => self.cache.full_index(),
        };
        let prompt = self.retrieval_prompt(question, subject);
        let env = SearchEnv {
            index: &index,
            bridge: &self.bridge,
            policy: self.policy.as_ref(),
            prompt: &prompt,
        };

        let (trajectories, rollouts, stats) = match cfg.strategy {
            Strategy::CtMcts => {
                let SearchOutcome {
                    trajectories,
                    rollouts,
                    stats,
                    ..
                } = search(question, &env, self.scorer.as_ref(), cfg)?;
                (trajectories, rollouts, stats)
            }
            Strategy::Greedy => {
                let traj = greedy_search(&env, cfg)?;
                (vec![traj], Vec::new(), SearchStats::default())
            }
            Strategy::Beam => {
                let beams = beam_search(&env, cfg.beam_width, cfg)?;
                (beams, Vec::new(), SearchStats::default())
            }
        };

        let evidence = select_documents(
            &trajectories,
            &index,
            self.cache.corpus(),
            self.select_strategy,
            self.window_chars,
        )?;
        Ok(Retrieval {
            trajectories,
            evidence,
            rollouts,
            stats,
        })
    }
}
