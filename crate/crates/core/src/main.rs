//! Command-line entry points: index building, single-question search, the
//! reasoning loop, evaluation, ablation sweeps and training-pair emission.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ctsearch::corpus::Corpus;
use ctsearch::engine::{templates, Engine};
use ctsearch::eval::{
    ablation_csv, load_dataset, run_ablation, run_eval, EvalMode, EvalOptions, SweepGrid,
};
use ctsearch::index::{store, CorpusIndex};
use ctsearch::mcts::{SearchConfig, Strategy};
use ctsearch::orchestrate::answer_question;
use ctsearch::policy::{NgramPolicy, ScriptBookPolicy, SharedPolicy, Smoothing, UniformPolicy};
use ctsearch::remote::{HttpOptions, RemoteLm, RemoteValueScorer, ValuePromptSide};
use ctsearch::select::SelectStrategy;
use ctsearch::subject::{SubjectIndexCache, DEFAULT_MEMO_CAPACITY};
use ctsearch::token::{Bridge, CharTokenizer, FileVocabTokenizer, SharedTokenizer, WordTokenizer};
use ctsearch::value::{emit_training_pairs, OracleScorer, SharedScorer};

#[derive(Parser)]
#[command(name = "ctsearch", about = "Retriever-free retrieval over a compressed corpus index")]
struct Cli {
    /// JSON config file mirroring the flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index operations.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Retrieve passages for one question.
    Search {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        question: String,
        #[arg(long)]
        subject: Option<String>,
        /// Gold answers for the oracle scorer (repeatable).
        #[arg(long = "gold")]
        golds: Vec<String>,
    },
    /// Run the multi-step reasoning loop for one question.
    Answer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        question: String,
        #[arg(long)]
        max_searches: Option<u32>,
        /// Gold answers for the oracle scorer (repeatable).
        #[arg(long = "gold")]
        golds: Vec<String>,
    },
    /// Evaluate over a dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "retrieval")]
        mode: ModeArg,
        #[arg(long)]
        max_searches: Option<u32>,
        /// Report output path (JSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-example JSON Lines log path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Record wall-clock latency (makes reports non-reproducible).
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep parameters over a dataset and emit a CSV summary.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Sweep grid JSON, e.g. {"G":[1,6],"M":[1,2]}.
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long, value_enum, default_value = "retrieval")]
        mode: ModeArg,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall-clock latency in the CSV.
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run retrieval over a dataset and emit labeled rollout pairs.
    EmitTrainingPairs {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build a .ctix index file from a JSON Lines corpus.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sa_rate: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Retrieval,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(name = "ct-mcts")]
    CtMcts,
    Beam,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum DocSelectArg {
    Path,
    Window,
    Document,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Ngram,
    Uniform,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum TokenizerArg {
    Char,
    Word,
    Vocab,
}

#[derive(Args)]
struct CommonArgs {
    /// Prebuilt .ctix index file.
    #[arg(long)]
    index: Option<PathBuf>,
    /// JSON Lines corpus (indexed on the fly when --index is absent).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    sa_rate: Option<u32>,

    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(short = 'G', long)]
    granularity: Option<u32>,
    #[arg(short = 'M', long)]
    expansions: Option<u32>,
    #[arg(long)]
    top_k: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    simulations: Option<u32>,
    #[arg(long)]
    max_rollout_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    paths_returned: Option<u32>,
    #[arg(long)]
    beam_width: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum)]
    doc_select: Option<DocSelectArg>,
    #[arg(long)]
    window_chars: Option<usize>,

    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    ngram_order: Option<usize>,
    #[arg(long, value_enum)]
    tokenizer: Option<TokenizerArg>,
    /// Vocabulary file (JSON array of surfaces) for --tokenizer vocab.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Scripted generations: JSON array, or object keyed by a substring of
    /// the prompt (e.g. the question).
    #[arg(long)]
    script: Option<PathBuf>,

    /// Language-model service base URL (or CT_LM_URL).
    #[arg(long)]
    lm_url: Option<String>,
    /// Value service base URL (or CT_VALUE_URL); enables the remote scorer.
    #[arg(long)]
    value_url: Option<String>,
}

/// JSON config file; every field optional, flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    search: Option<SearchConfig>,
    strategy: Option<Strategy>,
    doc_select: Option<SelectStrategy>,
    window_chars: Option<usize>,
    policy: Option<String>,
    ngram_order: Option<usize>,
    tokenizer: Option<String>,
    vocab: Option<PathBuf>,
    lm_url: Option<String>,
    value_url: Option<String>,
    value_prompt_side: Option<ValuePromptSide>,
    retrieval_template: Option<PathBuf>,
    value_template: Option<PathBuf>,
    sa_rate: Option<u32>,
    max_searches: Option<u32>,
    workers: Option<usize>,
    memo_capacity: Option<usize>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let data = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&data).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

struct Resolved {
    corpus: Arc<Corpus>,
    index: Arc<CorpusIndex>,
    cfg: SearchConfig,
    doc_select: SelectStrategy,
    window_chars: usize,
    tokenizer: SharedTokenizer,
    policy: SharedPolicy,
    value_url: Option<String>,
    value_prompt_side: ValuePromptSide,
    value_template: String,
    retrieval_template: Option<String>,
    max_searches: u32,
    workers: usize,
    memo_capacity: usize,
}

fn env_url(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|s| !s.is_empty())
}

fn resolve(common: &CommonArgs, file: &FileConfig) -> Result<Resolved> {
    let (corpus, index) = match (&common.index, &common.corpus) {
        (Some(path), _) => {
            let (corpus, index) = store::load(path)
                .with_context(|| format!("loading index {}", path.display()))?;
            (Arc::new(corpus), Arc::new(index))
        }
        (None, Some(path)) => {
            let corpus = Arc::new(Corpus::load_jsonl(path)?);
            let rate = common.sa_rate.or(file.sa_rate).unwrap_or(32);
            let index = Arc::new(CorpusIndex::build(&corpus, rate)?);
            (corpus, index)
        }
        (None, None) => bail!("either --index or --corpus is required"),
    };

    let mut cfg = file.search.clone().unwrap_or_default();
    if let Some(s) = file.strategy {
        cfg.strategy = s;
    }
    if let Some(v) = common.granularity {
        cfg.granularity = v;
    }
    if let Some(v) = common.expansions {
        cfg.expansions = v;
    }
    if let Some(v) = common.top_k {
        cfg.top_k = v;
    }
    if let Some(v) = common.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = common.simulations {
        cfg.simulations = v;
    }
    if let Some(v) = common.max_rollout_tokens {
        cfg.max_rollout_tokens = v;
    }
    if let Some(v) = common.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = common.paths_returned {
        cfg.paths_returned = v;
    }
    if let Some(v) = common.beam_width {
        cfg.beam_width = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(s) = common.strategy {
        cfg.strategy = match s {
            StrategyArg::CtMcts => Strategy::CtMcts,
            StrategyArg::Beam => Strategy::Beam,
            StrategyArg::Greedy => Strategy::Greedy,
        };
    }

    let doc_select = match common.doc_select {
        Some(DocSelectArg::Path) => SelectStrategy::DirectPath,
        Some(DocSelectArg::Window) => SelectStrategy::Window,
        Some(DocSelectArg::Document) => SelectStrategy::CompleteDocument,
        None => file.doc_select.unwrap_or(SelectStrategy::CompleteDocument),
    };
    let window_chars = common
        .window_chars
        .or(file.window_chars)
        .unwrap_or(ctsearch::select::DEFAULT_WINDOW_CHARS);

    let tokenizer_kind = match common.tokenizer {
        Some(TokenizerArg::Char) => "char".to_string(),
        Some(TokenizerArg::Word) => "word".to_string(),
        Some(TokenizerArg::Vocab) => "vocab".to_string(),
        None => file.tokenizer.clone().unwrap_or_else(|| "word".to_string()),
    };
    let tokenizer: SharedTokenizer = match tokenizer_kind.as_str() {
        "char" => Arc::new(CharTokenizer::from_corpus(&corpus)),
        "word" => Arc::new(WordTokenizer::from_corpus(&corpus)),
        "vocab" => {
            let path = common
                .vocab
                .clone()
                .or_else(|| file.vocab.clone())
                .context("--tokenizer vocab requires --vocab <file>")?;
            Arc::new(FileVocabTokenizer::load(&path)?)
        }
        other => bail!("unknown tokenizer {other:?}"),
    };

    let lm_url = common
        .lm_url
        .clone()
        .or_else(|| env_url("CT_LM_URL"))
        .or_else(|| file.lm_url.clone());
    let value_url = common
        .value_url
        .clone()
        .or_else(|| env_url("CT_VALUE_URL"))
        .or_else(|| file.value_url.clone());

    let policy_kind = match common.policy {
        Some(PolicyArg::Ngram) => "ngram".to_string(),
        Some(PolicyArg::Uniform) => "uniform".to_string(),
        Some(PolicyArg::Remote) => "remote".to_string(),
        None => file
            .policy
            .clone()
            .unwrap_or_else(|| if lm_url.is_some() { "remote".into() } else { "ngram".into() }),
    };
    let base_policy: SharedPolicy = match policy_kind.as_str() {
        "ngram" => {
            let order = common.ngram_order.or(file.ngram_order).unwrap_or(NgramPolicy::DEFAULT_ORDER);
            Arc::new(NgramPolicy::from_corpus(&corpus, tokenizer.clone(), order, Smoothing::AddOne))
        }
        "uniform" => Arc::new(UniformPolicy::new(tokenizer.vocab_size())),
        "remote" => {
            let url = lm_url.clone().context("remote policy requires --lm-url or CT_LM_URL")?;
            Arc::new(RemoteLm::new(HttpOptions::new(url)))
        }
        other => bail!("unknown policy {other:?}"),
    };
    let policy: SharedPolicy = match &common.script {
        Some(path) => {
            let data = std::fs::read_to_string(path)
                .with_context(|| format!("reading script {}", path.display()))?;
            Arc::new(ScriptBookPolicy::from_json(&data, base_policy)?)
        }
        None => base_policy,
    };

    let value_template = match &file.value_template {
        Some(p) => std::fs::read_to_string(p)?,
        None => templates::VALUE.to_string(),
    };
    let retrieval_template = match &file.retrieval_template {
        Some(p) => Some(std::fs::read_to_string(p)?),
        None => None,
    };

    Ok(Resolved {
        corpus,
        index,
        cfg,
        doc_select,
        window_chars,
        tokenizer,
        policy,
        value_url,
        value_prompt_side: file.value_prompt_side.unwrap_or(ValuePromptSide::Server),
        value_template,
        retrieval_template,
        max_searches: file.max_searches.unwrap_or(ctsearch::orchestrate::DEFAULT_MAX_SEARCHES),
        workers: file.workers.unwrap_or(4),
        memo_capacity: file.memo_capacity.unwrap_or(DEFAULT_MEMO_CAPACITY),
    })
}

impl Resolved {
    fn scorer(&self, golds: &[String]) -> SharedScorer {
        match &self.value_url {
            Some(url) => Arc::new(RemoteValueScorer::new(
                HttpOptions::new(url.clone()),
                self.value_prompt_side,
                self.value_template.clone(),
            )),
            None => Arc::new(OracleScorer::new(golds.to_vec())),
        }
    }

    fn engine(&self, scorer: SharedScorer) -> Engine {
        let bridge = Bridge::new(self.tokenizer.clone(), &self.index);
        let cache = SubjectIndexCache::new(self.corpus.clone(), self.index.clone(), self.memo_capacity);
        let mut engine = Engine::new(cache, bridge, self.policy.clone(), scorer);
        engine.select_strategy = self.doc_select;
        engine.window_chars = self.window_chars;
        if let Some(t) = &self.retrieval_template {
            engine = engine.with_retrieval_template(t.clone());
        }
        engine
    }
}

#[derive(Serialize)]
struct SearchOutput<'a> {
    question: &'a str,
    subject: Option<&'a str>,
    config: &'a SearchConfig,
    trajectories: &'a [ctsearch::mcts::Trajectory],
    evidence: &'a [ctsearch::select::Evidence],
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = load_file_config(cli.config.as_deref())?;

    match cli.command {
        Command::Index { command } => match command {
            IndexCommand::Build { corpus, out, sa_rate } => {
                let corpus = Corpus::load_jsonl(&corpus)?;
                let rate = sa_rate.or(file.sa_rate).unwrap_or(32);
                let index = CorpusIndex::build(&corpus, rate)?;
                store::save(&out, &corpus, &index)?;
                eprintln!(
                    "indexed {} documents ({} bytes) -> {}",
                    corpus.len(),
                    index.len(),
                    out.display()
                );
            }
        },
        Command::Search { common, question, subject, golds } => {
            let resolved = resolve(&common, &file)?;
            let engine = resolved.engine(resolved.scorer(&golds));
            let r = engine.retrieve(&question, subject.as_deref(), &resolved.cfg)?;
            let out = SearchOutput {
                question: &question,
                subject: subject.as_deref(),
                config: &resolved.cfg,
                trajectories: &r.trajectories,
                evidence: &r.evidence,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Answer { common, question, max_searches, golds } => {
            let resolved = resolve(&common, &file)?;
            let engine = resolved.engine(resolved.scorer(&golds));
            let max = max_searches.unwrap_or(resolved.max_searches);
            let trace = answer_question(&question, &engine, &resolved.cfg, max)?;
            println!("{}", serde_json::to_string_pretty(&trace)?);
        }
        Command::Eval { common, dataset, mode, max_searches, out, log, timings, workers } => {
            let resolved = resolve(&common, &file)?;
            let examples = load_dataset(&dataset)?;
            // Without a remote value service, score paths against the pooled
            // gold answers of the dataset (ablation mode).
            let all_golds: Vec<String> = examples
                .iter()
                .flat_map(|e| e.golden_answers.iter().cloned())
                .collect();
            let engine = resolved.engine(resolved.scorer(&all_golds));
            let opts = EvalOptions {
                mode: match mode {
                    ModeArg::Retrieval => EvalMode::RetrievalOnly,
                    ModeArg::Full => EvalMode::FullReasoning,
                },
                max_searches: max_searches.unwrap_or(resolved.max_searches),
                workers: workers.unwrap_or(resolved.workers),
                record_timing: timings,
            };
            let report = run_eval(&examples, &engine, &resolved.cfg, &opts)?;
            if let Some(p) = &log {
                let mut f = std::fs::File::create(p)?;
                ctsearch::eval::write_example_log(&report, &mut f)?;
            }
            write_output(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Command::Ablate { common, dataset, sweep, mode, out, timings, workers } => {
            let resolved = resolve(&common, &file)?;
            let examples = load_dataset(&dataset)?;
            let all_golds: Vec<String> = examples
                .iter()
                .flat_map(|e| e.golden_answers.iter().cloned())
                .collect();
            let engine = resolved.engine(resolved.scorer(&all_golds));
            let grid: SweepGrid = serde_json::from_str(&std::fs::read_to_string(&sweep)?)
                .with_context(|| format!("parsing sweep {}", sweep.display()))?;
            let opts = EvalOptions {
                mode: match mode {
                    ModeArg::Retrieval => EvalMode::RetrievalOnly,
                    ModeArg::Full => EvalMode::FullReasoning,
                },
                max_searches: resolved.max_searches,
                workers: workers.unwrap_or(resolved.workers),
                record_timing: timings,
            };
            let results = run_ablation(&examples, &engine, &resolved.cfg, &grid, &opts)?;
            let mut rows: Vec<_> = results.iter().map(|(row, _)| row.clone()).collect();
            if !timings {
                for r in &mut rows {
                    r.latency_ms = 0.0;
                }
            }
            write_output(out.as_deref(), &ablation_csv(&rows))?;
        }
        Command::EmitTrainingPairs { common, dataset, out } => {
            let resolved = resolve(&common, &file)?;
            let examples = load_dataset(&dataset)?;
            let mut sink = std::io::BufWriter::new(std::fs::File::create(&out)?);
            let mut total = 0usize;
            for (i, ex) in examples.iter().enumerate() {
                let engine = resolved.engine(Arc::new(OracleScorer::new(ex.golden_answers.clone())));
                let mut cfg = resolved.cfg.clone();
                cfg.seed = resolved.cfg.seed.wrapping_add(i as u64);
                cfg.strategy = Strategy::CtMcts;
                let r = engine.retrieve(&ex.question, ex.subject.as_deref(), &cfg)?;
                let texts: Vec<String> = r.rollouts.iter().map(|t| t.text.clone()).collect();
                total += emit_training_pairs(&ex.question, &texts, &ex.golden_answers, &mut sink)?;
            }
            sink.flush()?;
            eprintln!("wrote {total} training pairs to {}", out.display());
        }
    }
    Ok(())
}
