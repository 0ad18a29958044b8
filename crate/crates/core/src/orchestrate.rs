//! The multi-step reasoning loop: generate, parse the action tag, retrieve
//! on search actions, inject evidence, extract the final answer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{templates, Engine, EngineError};
use crate::mcts::{SearchConfig, SearchError};
use crate::policy::PolicyError;
use crate::select::Evidence;

pub const DEFAULT_MAX_SEARCHES: u32 = 6;
/// Per-document truncation applied before injecting evidence.
pub const INFO_DOC_CHAR_CAP: usize = 1500;
/// Token budget passed to the generator per step.
const GEN_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error("generation failed: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One parsed model action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Think { payload: String },
    Search { subject: String, question: String, payload: String },
    Answer { payload: String },
    /// An opened search/answer tag that could not be parsed; the loop
    /// continues past it.
    Malformed { payload: String },
}

/// Extracts the first actionable tag from generated text. Search and answer
/// tags take priority; text with neither is a think step. A search tag whose
/// body does not parse as `(subject : ..., question : ...)` becomes
/// [`Action::Malformed`] rather than failing the loop.
pub fn parse_action(generated: &str) -> Action {
    let search_at = generated.find("<search>");
    let answer_at = generated.find("<answer>");
    match (search_at, answer_at) {
        (Some(s), Some(a)) if s < a => parse_search(generated, s),
        (Some(s), None) => parse_search(generated, s),
        (_, Some(a)) => parse_answer(generated, a),
        (None, None) => Action::Think {
            payload: generated.trim().to_string(),
        },
    }
}

fn parse_search(generated: &str, open_at: usize) -> Action {
    let body_start = open_at + "<search>".len();
    let Some(close_rel) = generated[body_start..].find("</search>") else {
        return Action::Malformed {
            payload: generated[open_at..].trim().to_string(),
        };
    };
    let body = generated[body_start..body_start + close_rel].trim();
    match split_query(body) {
        Some((subject, question)) if !subject.is_empty() && !question.is_empty() => Action::Search {
            subject,
            question,
            payload: body.to_string(),
        },
        _ => Action::Malformed {
            payload: body.to_string(),
        },
    }
}

/// Parses `(subject : S, question : Q)`, tolerating spaces around the
/// colons and the comma. The subject may itself contain commas; the split
/// happens at the first `, question :`.
fn split_query(body: &str) -> Option<(String, String)> {
    let inner = body.trim().strip_prefix('(')?;
    let inner = inner.trim_end().strip_suffix(')')?;
    let after_subject = inner.trim_start().strip_prefix("subject")?.trim_start();
    let after_colon = after_subject.strip_prefix(':')?;
    let re = regex::Regex::new(r",\s*question\s*:").expect("static regex");
    let m = re.find(after_colon)?;
    let subject = after_colon[..m.start()].trim().to_string();
    let question = after_colon[m.end()..].trim().to_string();
    Some((subject, question))
}

fn parse_answer(generated: &str, open_at: usize) -> Action {
    let body_start = open_at + "<answer>".len();
    let body = match generated[body_start..].find("</answer>") {
        Some(close_rel) => &generated[body_start..body_start + close_rel],
        // A generation cut off at the token limit may miss the closing tag;
        // take the remainder rather than dropping the answer.
        None => &generated[body_start..],
    };
    Action::Answer {
        payload: body.trim().to_string(),
    }
}

/// One step of the reasoning trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub generated: String,
    pub action: Action,
    pub evidence: Vec<Evidence>,
    /// Set when a search action produced no trajectories (dead corpus).
    pub retrieval_failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub steps: Vec<ReasoningStep>,
    pub final_answer: Option<String>,
    pub search_count: u32,
}

/// Formats retrieved evidence as an information block, one truncated
/// document per entry.
pub fn information_block(subject: &str, evidence: &[Evidence]) -> String {
    let docs: Vec<String> = evidence
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut text = e.text.clone();
            if text.chars().count() > INFO_DOC_CHAR_CAP {
                text = text.chars().take(INFO_DOC_CHAR_CAP).collect();
            }
            format!("Doc {i}. {text}")
        })
        .collect();
    format!("<information>For {subject} : {}</information>", docs.join("\n\n"))
}

/// Runs the reasoning loop for one question until an answer action, a
/// policy failure, or the search budget is exhausted (which forces a final
/// answer generation).
pub fn answer_question(
    question: &str,
    engine: &Engine,
    cfg: &SearchConfig,
    max_searches: u32,
) -> Result<ReasoningTrace, OrchestrateError> {
    let max_searches = max_searches.max(1);
    let mut context = templates::REASONING.replace("{question}", question);
    let mut trace = ReasoningTrace {
        steps: Vec::new(),
        final_answer: None,
        search_count: 0,
    };
    let stop = vec!["</search>".to_string(), "</answer>".to_string()];
    // Generous bound so a generator stuck on think/malformed steps cannot
    // spin forever.
    let max_steps = max_searches * 2 + 8;

    for _ in 0..max_steps {
        let generated = engine.policy().generate(&context, &stop, GEN_MAX_TOKENS)?;
        let action = parse_action(&generated);
        context.push_str(&generated);
        context.push('\n');

        match action.clone() {
            Action::Answer { payload } => {
                trace.steps.push(ReasoningStep {
                    generated,
                    action,
                    evidence: Vec::new(),
                    retrieval_failed: false,
                });
                trace.final_answer = Some(payload);
                return Ok(trace);
            }
            Action::Search { subject, question: sub_question, .. } => {
                if trace.search_count >= max_searches {
                    trace.steps.push(ReasoningStep {
                        generated,
                        action,
                        evidence: Vec::new(),
                        retrieval_failed: false,
                    });
                    break;
                }
                trace.search_count += 1;
                let (evidence, failed) =
                    match engine.retrieve(&sub_question, Some(&subject), cfg) {
                        Ok(r) => (r.evidence, false),
                        Err(EngineError::Search(SearchError::DeadCorpus)) => (Vec::new(), true),
                        Err(e) => return Err(e.into()),
                    };
                context.push_str(&information_block(&subject, &evidence));
                context.push('\n');
                trace.steps.push(ReasoningStep {
                    generated,
                    action,
                    evidence,
                    retrieval_failed: failed,
                });
            }
            Action::Think { .. } | Action::Malformed { .. } => {
                trace.steps.push(ReasoningStep {
                    generated,
                    action,
                    evidence: Vec::new(),
                    retrieval_failed: false,
                });
            }
        }
    }

    // Budget exhausted: force a final answer.
    context.push_str("\nYou must provide the final answer now inside <answer> and </answer>.\n");
    let generated = engine
        .policy()
        .generate(&context, &["</answer>".to_string()], GEN_MAX_TOKENS)?;
    let action = parse_action(&generated);
    if let Action::Answer { payload } = &action {
        trace.final_answer = Some(payload.clone());
    }
    trace.steps.push(ReasoningStep {
        generated,
        action,
        evidence: Vec::new(),
        retrieval_failed: false,
    });
    Ok(trace)
}
