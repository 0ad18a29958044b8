//! Dataset ingestion, EM/F1 metrics, the evaluation runner and the ablation
//! sweep.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::mcts::{SearchConfig, SearchError, Strategy};
use crate::orchestrate::{answer_question, OrchestrateError};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("no examples in dataset")]
    NoExamples,
    #[error("empty ablation grid")]
    EmptyGrid,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One evaluation question. `subject` is optional; without it,
/// retrieval-only mode falls back to the full index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub golden_answers: Vec<String>,
}

/// Reads a JSON Lines dataset, one QAExample per line.
pub fn load_dataset(path: &Path) -> Result<Vec<QAExample>, EvalError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: QAExample = serde_json::from_str(&line).map_err(|source| EvalError::Parse {
            line: lineno + 1,
            source,
        })?;
        out.push(ex);
    }
    if out.is_empty() {
        return Err(EvalError::NoExamples);
    }
    Ok(out)
}

/// Standard open-domain QA answer normalization: lowercase, strip
/// punctuation, drop articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = normalize(text);
    let no_punct: String = lower
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized prediction equals any normalized gold answer.
pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    let p = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g) == p) as u8
}

/// Maximum token-level F1 over the gold answers (bag-of-words multiset
/// overlap after normalization).
pub fn f1(pred: &str, golds: &[String]) -> f64 {
    let pred_tokens: Vec<String> = normalize_answer(pred)
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut best = 0.0f64;
    for gold in golds {
        let gold_tokens: Vec<String> = normalize_answer(gold)
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if pred_tokens.is_empty() || gold_tokens.is_empty() {
            if pred_tokens == gold_tokens {
                best = best.max(1.0);
            }
            continue;
        }
        let mut counts = std::collections::HashMap::new();
        for t in &gold_tokens {
            *counts.entry(t.as_str()).or_insert(0i64) += 1;
        }
        let mut overlap = 0i64;
        for t in &pred_tokens {
            if let Some(c) = counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    overlap += 1;
                }
            }
        }
        if overlap == 0 {
            continue;
        }
        let precision = overlap as f64 / pred_tokens.len() as f64;
        let recall = overlap as f64 / gold_tokens.len() as f64;
        best = best.max(2.0 * precision * recall / (precision + recall));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Score whether any returned evidence contains a gold answer.
    RetrievalOnly,
    /// Run the full reasoning loop and score the final answer.
    FullReasoning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleReport {
    pub id: String,
    pub em: f64,
    pub f1: f64,
    pub latency_ms: f64,
    pub rollout_count: u32,
    pub path_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: f64,
    pub f1: f64,
    pub per_example: Vec<ExampleReport>,
    pub config_echo: SearchConfig,
    pub mode: EvalMode,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub max_searches: u32,
    pub workers: usize,
    /// Record wall-clock latency per example. Off by default so reports are
    /// byte-identical across reruns.
    pub record_timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::RetrievalOnly,
            max_searches: crate::orchestrate::DEFAULT_MAX_SEARCHES,
            workers: 4,
            record_timing: false,
        }
    }
}

/// Whether any evidence text contains any gold answer after normalization.
fn evidence_hit(evidence: &[crate::select::Evidence], golds: &[String]) -> bool {
    evidence.iter().any(|e| {
        let text = normalize(&e.text);
        golds.iter().any(|g| {
            let g = normalize(g);
            !g.is_empty() && text.contains(&g)
        })
    })
}

fn mean_path_length(trajs: &[crate::mcts::Trajectory]) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    trajs.iter().map(|t| t.token_ids.len() as f64).sum::<f64>() / trajs.len() as f64
}

fn eval_example(
    ex: &QAExample,
    engine: &Engine,
    cfg: &SearchConfig,
    opts: &EvalOptions,
) -> ExampleReport {
    let started = Instant::now();
    let mut report = ExampleReport {
        id: ex.id.clone(),
        em: 0.0,
        f1: 0.0,
        latency_ms: 0.0,
        rollout_count: 0,
        path_length: 0.0,
        answer: None,
        failed: false,
    };
    match opts.mode {
        EvalMode::RetrievalOnly => {
            match engine.retrieve(&ex.question, ex.subject.as_deref(), cfg) {
                Ok(r) => {
                    let hit = evidence_hit(&r.evidence, &ex.golden_answers) as u8 as f64;
                    report.em = hit;
                    report.f1 = hit;
                    report.rollout_count = r.stats.rollout_count;
                    report.path_length = mean_path_length(&r.trajectories);
                }
                Err(EngineError::Search(SearchError::DeadCorpus)) => {
                    report.failed = true;
                }
                Err(_) => {
                    report.failed = true;
                }
            }
        }
        EvalMode::FullReasoning => match answer_question(&ex.question, engine, cfg, opts.max_searches) {
            Ok(trace) => {
                let answer = trace.final_answer.unwrap_or_default();
                report.em = exact_match(&answer, &ex.golden_answers) as f64;
                report.f1 = f1(&answer, &ex.golden_answers);
                report.answer = Some(answer);
            }
            Err(OrchestrateError::Policy(_)) | Err(OrchestrateError::Engine(_)) => {
                report.failed = true;
            }
        },
    }
    if opts.record_timing {
        report.latency_ms = started.elapsed().as_secs_f64() * 1000.0;
    }
    report
}

/// Evaluates every example with a bounded worker pool over the shared
/// engine. Per-example seeds derive from the base seed plus the example
/// position, so reports are independent of scheduling.
pub fn run_eval(
    examples: &[QAExample],
    engine: &Engine,
    cfg: &SearchConfig,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::NoExamples);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .expect("thread pool construction");
    let per_example: Vec<ExampleReport> = pool.install(|| {
        examples
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut ex_cfg = cfg.clone();
                ex_cfg.seed = cfg.seed.wrapping_add(i as u64);
                eval_example(ex, engine, &ex_cfg, opts)
            })
            .collect()
    });
    let n = per_example.len() as f64;
    let em = per_example.iter().map(|r| r.em).sum::<f64>() / n;
    let f1 = per_example.iter().map(|r| r.f1).sum::<f64>() / n;
    Ok(EvalReport {
        em,
        f1,
        per_example,
        config_echo: cfg.clone(),
        mode: opts.mode,
    })
}

/// Writes one JSON line per example to `sink`.
pub fn write_example_log(report: &EvalReport, sink: &mut impl Write) -> std::io::Result<()> {
    for ex in &report.per_example {
        serde_json::to_writer(&mut *sink, ex)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Parameter grid for ablations; the sweep is the cartesian product of the
/// provided axes over the base config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default, rename = "G")]
    pub granularity: Vec<u32>,
    #[serde(default, rename = "M")]
    pub expansions: Vec<u32>,
    #[serde(default)]
    pub strategy: Vec<Strategy>,
    #[serde(default)]
    pub top_k: Vec<u32>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.granularity.is_empty()
            && self.expansions.is_empty()
            && self.strategy.is_empty()
            && self.top_k.is_empty()
            && self.lambda.is_empty()
    }

    /// Every configuration in the grid, together with a label of the swept
    /// values.
    pub fn configs(&self, base: &SearchConfig) -> Vec<(String, SearchConfig)> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &g in &axis(&self.granularity) {
            for &m in &axis(&self.expansions) {
                for &s in &axis(&self.strategy) {
                    for &k in &axis(&self.top_k) {
                        for &l in &axis(&self.lambda) {
                            let mut cfg = base.clone();
                            let mut label = Vec::new();
                            if let Some(g) = g {
                                cfg.granularity = g;
                                label.push(format!("G={g}"));
                            }
                            if let Some(m) = m {
                                cfg.expansions = m;
                                cfg.top_k = cfg.top_k.max(m);
                                label.push(format!("M={m}"));
                            }
                            if let Some(s) = s {
                                cfg.strategy = s;
                                label.push(format!("strategy={s}"));
                            }
                            if let Some(k) = k {
                                cfg.top_k = k;
                                label.push(format!("top_k={k}"));
                            }
                            if let Some(l) = l {
                                cfg.lambda = l;
                                label.push(format!("lambda={l}"));
                            }
                            out.push((label.join(","), cfg));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub latency_ms: f64,
    pub avg_rollout_count: f64,
    pub avg_path_length: f64,
    pub em: f64,
    pub f1: f64,
}

/// Runs one eval per grid point and returns the reports with their summary
/// rows. Ablations always record timing.
pub fn run_ablation(
    examples: &[QAExample],
    engine: &Engine,
    base: &SearchConfig,
    grid: &SweepGrid,
    opts: &EvalOptions,
) -> Result<Vec<(AblationRow, EvalReport)>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut opts = opts.clone();
    opts.record_timing = true;
    let mut out = Vec::new();
    for (label, cfg) in grid.configs(base) {
        let report = run_eval(examples, engine, &cfg, &opts)?;
        let n = report.per_example.len() as f64;
        let row = AblationRow {
            label,
            latency_ms: report.per_example.iter().map(|r| r.latency_ms).sum::<f64>() / n,
            avg_rollout_count: report.per_example.iter().map(|r| f64::from(r.rollout_count)).sum::<f64>() / n,
            avg_path_length: report.per_example.iter().map(|r| r.path_length).sum::<f64>() / n,
            em: report.em,
            f1: report.f1,
        };
        out.push((row, report));
    }
    Ok(out)
}

/// CSV summary of an ablation, one row per grid point.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("label,latency_ms,avg_rollout_count,avg_path_length,em,f1\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.3},{:.3},{:.3},{:.4},{:.4}\n",
            r.label, r.latency_ms, r.avg_rollout_count, r.avg_path_length, r.em, r.f1
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golds(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_match_normalizes() {
        assert_eq!(exact_match("Beijing", &golds(&["beijing"])), 1);
        assert_eq!(exact_match("the opera", &golds(&["opera"])), 1);
        assert_eq!(exact_match("fluid", &golds(&["water"])), 0);
        assert_eq!(exact_match("an Opera!", &golds(&["opera"])), 1);
    }

    #[test]
    fn f1_token_overlap() {
        let got = f1("the opera house", &golds(&["opera"]));
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1("same words", &golds(&["same words"])), 1.0);
        assert_eq!(f1("alpha beta", &golds(&["gamma delta"])), 0.0);
    }

    #[test]
    fn em_one_implies_f1_one() {
        for (pred, gold) in [("The Opera", "opera"), ("a b c", "b a c")] {
            let g = golds(&[gold]);
            if exact_match(pred, &g) == 1 {
                assert_eq!(f1(pred, &g), 1.0, "{pred}");
            }
        }
    }

    #[test]
    fn f1_max_over_golds() {
        let g = golds(&["completely different", "opera house"]);
        assert_eq!(f1("opera house", &g), 1.0);
    }

    #[test]
    fn sweep_grid_cartesian_product() {
        let grid: SweepGrid = serde_json::from_str(r#"{"G":[1,6],"M":[1,2]}"#).unwrap();
        let base = SearchConfig::default();
        let cfgs = grid.configs(&base);
        assert_eq!(cfgs.len(), 4);
        assert_eq!(cfgs[0].0, "G=1,M=1");
        assert_eq!(cfgs[3].1.granularity, 6);
        assert_eq!(cfgs[3].1.expansions, 2);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let grid = SweepGrid::default();
        assert!(grid.is_empty());
    }

    #[test]
    fn dataset_parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"id\":\"a\",\"question\":\"q\",\"golden_answers\":[\"x\"]}\nnot json\n").unwrap();
        match load_dataset(&p) {
            Err(EvalError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
