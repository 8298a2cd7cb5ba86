//! Pipeline configuration and the batch drivers behind the command-line tool.
//!
//! Documents are processed in parallel on a dedicated worker pool and merged
//! back in input order, so outputs do not depend on the worker count.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, ChunkSizing, RecapAgent, Transcript};
use crate::document::{ContextConfig, TokenizedDocument};
use crate::error::{Error, ProviderError, Result};
use crate::lsg::{score_document, select_key_tokens, MiningConfig};
use crate::provider::{
    AdaptiveNgram, AdaptiveNgramConfig, EchoDouble, ExtractiveDouble, GenerationRequest,
    LanguageModel, LossyConfig, LossyExtractiveDouble, ProviderConfig, RemoteProvider, DEFAULT_CAP,
};
use crate::recap::{
    build_training_sequence, merge_by_sentence, refine_segment, CorpusRecord, PromptTemplates,
    RecapEntry, RECAP_CLOSE, RECAP_OPEN,
};
use crate::retrieval::{best_segment, RetrievalConfig};
use crate::synthetic::{SyntheticTask, NEEDLE_MARKER};

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_marker() -> String {
    NEEDLE_MARKER.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSelection {
    /// Adaptive n-gram scorer; generation echoes the prompt.
    Oracle(AdaptiveNgramConfig),
    Echo {
        #[serde(default = "default_cap")]
        max_context_tokens: usize,
    },
    Extractive {
        #[serde(default = "default_marker")]
        marker: String,
        #[serde(default = "default_cap")]
        max_context_tokens: usize,
    },
    Lossy(LossyConfig),
    Remote(ProviderConfig),
}

impl ProviderSelection {
    pub const KINDS: [&'static str; 5] = ["oracle", "echo", "extractive", "lossy", "remote"];

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Oracle(_) => "oracle",
            Self::Echo { .. } => "echo",
            Self::Extractive { .. } => "extractive",
            Self::Lossy(_) => "lossy",
            Self::Remote(_) => "remote",
        }
    }

    /// Default settings for a provider kind.
    pub fn from_kind(kind: &str) -> Result<Self> {
        Ok(match kind {
            "oracle" => Self::Oracle(AdaptiveNgramConfig::default()),
            "echo" => Self::Echo {
                max_context_tokens: DEFAULT_CAP,
            },
            "extractive" => Self::Extractive {
                marker: default_marker(),
                max_context_tokens: DEFAULT_CAP,
            },
            "lossy" => Self::Lossy(LossyConfig {
                marker: default_marker(),
                ..Default::default()
            }),
            "remote" => Self::Remote(ProviderConfig::default()),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown provider {other:?}; expected one of {:?}",
                    Self::KINDS
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Oracle(c) => c.validate(),
            Self::Remote(c) => c.validate(),
            Self::Lossy(c) if !(0.0..=1.0).contains(&c.keep_probability) => Err(
                Error::InvalidConfig("keep_probability must lie in [0, 1]".into()),
            ),
            Self::Extractive { marker, .. } if marker.is_empty() => Err(Error::InvalidConfig(
                "extractive marker must be non-empty".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LanguageModel>> {
        self.validate()?;
        Ok(match self {
            Self::Oracle(c) => Arc::new(AdaptiveNgram::new(c.clone())?),
            Self::Echo { max_context_tokens } => Arc::new(EchoDouble::new(*max_context_tokens)),
            Self::Extractive {
                marker,
                max_context_tokens,
            } => Arc::new(ExtractiveDouble::new(marker.clone(), *max_context_tokens)),
            Self::Lossy(c) => Arc::new(LossyExtractiveDouble::new(c.clone())),
            Self::Remote(c) => Arc::new(RemoteProvider::new(c.clone())?),
        })
    }
}

/// Mining settings as written in a config file. Unset optional fields follow
/// the short window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSettings {
    pub top_k: usize,
    pub short_window: usize,
    pub long_window: Option<usize>,
    pub min_position: Option<usize>,
    pub stride: usize,
    pub suppression_radius: Option<usize>,
}

impl Default for MiningSettings {
    fn default() -> Self {
        Self {
            top_k: 8,
            short_window: 512,
            long_window: None,
            min_position: None,
            stride: 1,
            suppression_radius: None,
        }
    }
}

impl MiningSettings {
    pub fn to_config(&self) -> MiningConfig {
        let context = ContextConfig {
            short_window: self.short_window,
            long_window: self.long_window,
        };
        let mut cfg = MiningConfig::new(self.top_k, context);
        cfg.stride = self.stride;
        if let Some(p) = self.min_position {
            cfg.min_position = p;
        }
        if let Some(r) = self.suppression_radius {
            cfg.suppression_radius = r;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub tasks: usize,
    pub length_tokens: usize,
    /// Fixed needle position; drawn per task when unset.
    pub needle_position: Option<f64>,
    pub n_chunks: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            tasks: 50,
            length_tokens: 1200,
            needle_position: None,
            n_chunks: vec![3, 5, 6, 7, 9, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub dry_run: bool,
    pub refine_max_new_tokens: usize,
    /// Computes log-probabilities during mining.
    pub scoring: ProviderSelection,
    /// Refines recaps during mining and drives the agent.
    pub generation: ProviderSelection,
    pub mining: MiningSettings,
    pub retrieval: RetrievalConfig,
    pub agent: AgentConfig,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            input: None,
            output: None,
            templates_dir: None,
            dry_run: false,
            refine_max_new_tokens: 128,
            scoring: ProviderSelection::Oracle(AdaptiveNgramConfig::default()),
            generation: ProviderSelection::Extractive {
                marker: default_marker(),
                max_context_tokens: DEFAULT_CAP,
            },
            mining: MiningSettings::default(),
            retrieval: RetrievalConfig::default(),
            agent: AgentConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if self.refine_max_new_tokens == 0 {
            return Err(Error::InvalidConfig(
                "refine_max_new_tokens must be >= 1".into(),
            ));
        }
        if self.eval.n_chunks.contains(&0) {
            return Err(Error::InvalidConfig(
                "eval n_chunks entries must be >= 1".into(),
            ));
        }
        self.scoring.validate()?;
        self.generation.validate()?;
        self.mining.to_config().validate()?;
        self.retrieval.validate()?;
        self.agent.validate()?;
        self.templates()?;
        Ok(())
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir),
            None => Ok(PromptTemplates::default()),
        }
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDocument {
    pub id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct InputLine {
    #[serde(default)]
    id: Option<String>,
    text: String,
}

/// `.jsonl` files hold one `{"id"?, "text"}` object per line; any other file
/// is a single document named after its stem. Blank input yields nothing.
pub fn read_documents(path: &Path) -> Result<Vec<InputDocument>> {
    let raw = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let mut docs = Vec::new();
        for line in raw.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: InputLine = serde_json::from_str(line)?;
            docs.push(InputDocument {
                id: parsed.id.unwrap_or_else(|| format!("doc-{}", docs.len())),
                text: parsed.text,
            });
        }
        return Ok(docs);
    }
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let id = path
        .file_stem()
        .map_or_else(|| "doc-0".into(), |s| s.to_string_lossy().into_owned());
    Ok(vec![InputDocument { id, text: raw }])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub doc_id: String,
    pub position: usize,
    pub token: String,
    pub log_gap: f64,
}

/// One mined selection, emitted instead of corpus records in dry-run mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub doc_id: String,
    pub key_position: usize,
    pub key_token: String,
    pub log_gap: f64,
    pub insertion_position: usize,
    pub segment_start: usize,
    pub segment_end: usize,
    pub baseline_logprob: f64,
    pub best_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineReport {
    pub documents: usize,
    pub records: usize,
    pub key_tokens: usize,
    pub selections: usize,
    pub recaps: usize,
    /// Documents emitted unchanged because they had no key tokens.
    pub passthrough: usize,
    /// Key tokens with no usable remote segment.
    pub skipped_keys: usize,
    pub failures: Vec<Failure>,
}

/// JSON lines plus a summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOutput<R> {
    pub lines: Vec<String>,
    pub report: R,
}

#[derive(Default)]
struct DocOutcome {
    lines: Vec<String>,
    key_tokens: usize,
    selections: usize,
    recaps: usize,
    passthrough: bool,
    skipped_keys: usize,
}

struct Miner {
    scorer: Arc<dyn LanguageModel>,
    generator: Arc<dyn LanguageModel>,
    templates: PromptTemplates,
    mining: MiningConfig,
    retrieval: RetrievalConfig,
    refine_max_new_tokens: usize,
    dry_run: bool,
}

impl Miner {
    fn mine(&self, input: &InputDocument) -> Result<DocOutcome> {
        if input.text.contains(RECAP_OPEN) || input.text.contains(RECAP_CLOSE) {
            return Err(Error::TagLiteralInInput);
        }
        let doc = TokenizedDocument::new(&input.id, &input.text, self.scorer.as_ref())?;
        let keys = match select_key_tokens(self.scorer.as_ref(), &doc, &self.mining) {
            Ok(k) => k,
            Err(Error::NoKeyTokens) => {
                info!("{}: no key tokens; passing through", doc.id);
                let lines = if self.dry_run {
                    Vec::new()
                } else {
                    vec![serde_json::to_string(&CorpusRecord::passthrough(
                        &doc.id, &doc.text,
                    ))?]
                };
                return Ok(DocOutcome {
                    lines,
                    passthrough: true,
                    ..Default::default()
                });
            }
            Err(e) => return Err(e),
        };
        let mut outcome = DocOutcome {
            key_tokens: keys.len(),
            ..Default::default()
        };
        let mut selections = Vec::new();
        for key in &keys {
            match best_segment(
                self.scorer.as_ref(),
                &doc,
                key,
                &self.mining.context,
                &self.retrieval,
            ) {
                Ok(s) => selections.push(s),
                Err(e @ (Error::NoImprovingSegment { .. } | Error::EmptyRemotePrefix { .. })) => {
                    info!("{}: {e}", doc.id);
                    outcome.skipped_keys += 1;
                }
                Err(e) => return Err(e),
            }
        }
        outcome.selections = selections.len();
        let merged = merge_by_sentence(&doc, selections);

        if self.dry_run {
            for (at, s) in merged {
                outcome.lines.push(serde_json::to_string(&SelectionRecord {
                    doc_id: doc.id.clone(),
                    key_position: s.key.position,
                    key_token: s.key.token.clone(),
                    log_gap: s.key.log_gap,
                    insertion_position: at,
                    segment_start: s.best.start,
                    segment_end: s.best.end,
                    baseline_logprob: s.baseline_logprob,
                    best_logprob: s.best_logprob,
                })?);
            }
            return Ok(outcome);
        }

        let entries = merged
            .into_par_iter()
            .map(|(at, source)| {
                let refined_text = refine_segment(
                    self.generator.as_ref(),
                    &self.templates,
                    &source.best.text,
                    self.refine_max_new_tokens,
                )?;
                Ok(RecapEntry {
                    source,
                    refined_text,
                    insertion_position: at,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = build_training_sequence(&doc, entries)?;
        outcome.recaps = record.recaps.len();
        outcome.lines.push(serde_json::to_string(&record)?);
        Ok(outcome)
    }
}

/// Mine every document into a corpus record, or selection records when
/// `dry_run` is set. Per-document failures are reported, not fatal.
pub fn run_mine(
    config: &PipelineConfig,
    docs: &[InputDocument],
) -> Result<BatchOutput<MineReport>> {
    config.validate()?;
    let miner = Miner {
        scorer: config.scoring.build()?,
        generator: config.generation.build()?,
        templates: config.templates()?,
        mining: config.mining.to_config(),
        retrieval: config.retrieval,
        refine_max_new_tokens: config.refine_max_new_tokens,
        dry_run: config.dry_run,
    };
    let outcomes: Vec<Result<DocOutcome>> = config
        .pool()?
        .install(|| docs.par_iter().map(|d| miner.mine(d)).collect());

    let mut report = MineReport {
        documents: docs.len(),
        ..Default::default()
    };
    let mut lines = Vec::new();
    for (doc, outcome) in docs.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                report.key_tokens += o.key_tokens;
                report.selections += o.selections;
                report.recaps += o.recaps;
                report.skipped_keys += o.skipped_keys;
                report.passthrough += usize::from(o.passthrough);
                lines.extend(o.lines);
            }
            Err(e) => {
                warn!("{}: {e}", doc.id);
                report.failures.push(Failure {
                    doc_id: doc.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    report.records = lines.len();
    Ok(BatchOutput { lines, report })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub documents: usize,
    pub positions: usize,
    pub failures: Vec<Failure>,
}

/// Gap of every token of every document.
pub fn run_score(
    config: &PipelineConfig,
    docs: &[InputDocument],
) -> Result<BatchOutput<ScoreReport>> {
    config.validate()?;
    let scorer = config.scoring.build()?;
    let ctx = config.mining.to_config().context;
    let scored: Vec<Result<Vec<String>>> = config.pool()?.install(|| {
        docs.par_iter()
            .map(|d| {
                let doc = TokenizedDocument::new(&d.id, &d.text, scorer.as_ref())?;
                score_document(scorer.as_ref(), &doc, &ctx)?
                    .into_iter()
                    .map(|r| {
                        Ok(serde_json::to_string(&ScoreRecord {
                            doc_id: doc.id.clone(),
                            position: r.position,
                            token: r.token,
                            log_gap: r.log_gap,
                        })?)
                    })
                    .collect()
            })
            .collect()
    });
    let mut report = ScoreReport {
        documents: docs.len(),
        ..Default::default()
    };
    let mut lines = Vec::new();
    for (doc, result) in docs.iter().zip(scored) {
        match result {
            Ok(l) => lines.extend(l),
            Err(e) => report.failures.push(Failure {
                doc_id: doc.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    report.positions = lines.len();
    Ok(BatchOutput { lines, report })
}

/// Run the recap agent over one document.
pub fn run_agent(
    config: &PipelineConfig,
    doc: &InputDocument,
    question: &str,
) -> Result<Transcript> {
    config.validate()?;
    let provider = config.generation.build()?;
    let tokenized = TokenizedDocument::new(&doc.id, &doc.text, provider.as_ref())?;
    RecapAgent::new(provider.as_ref(), config.agent.clone(), config.templates()?)?
        .run(&tokenized, question)
}

/// Answer from the last tokens of the document that fit the provider's
/// context alongside the question.
pub fn truncation_answer(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    question: &str,
    max_new_tokens: usize,
) -> Result<String> {
    let keep = provider
        .max_context_tokens()
        .saturating_sub(provider.count_tokens(question)?);
    let start = doc.len().saturating_sub(keep);
    let prompt = format!("{}\n{question}", doc.text_of(start..doc.len()));
    match provider.generate(&GenerationRequest::new(prompt, max_new_tokens)) {
        Ok(a) => Ok(a),
        Err(ProviderError::GenerationEmpty) => Ok(String::new()),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub recovered: usize,
    pub tasks: usize,
    pub rate: f64,
}

impl Rate {
    fn from_flags(flags: impl Iterator<Item = bool>) -> Self {
        let (mut recovered, mut tasks) = (0, 0);
        for f in flags {
            tasks += 1;
            recovered += usize::from(f);
        }
        let rate = if tasks == 0 {
            0.0
        } else {
            recovered as f64 / tasks as f64
        };
        Self {
            recovered,
            tasks,
            rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSettingResult {
    pub n_chunks: usize,
    #[serde(flatten)]
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub seed: u64,
    pub needle_position: f64,
    pub truncation: bool,
    /// One flag per chunk setting, in report order.
    pub agent: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provider: String,
    pub truncation: Rate,
    pub agent: Vec<ChunkSettingResult>,
    pub tasks: Vec<TaskOutcome>,
}

/// Compare the recap agent at each chunk count against the truncation
/// baseline on every task.
pub fn evaluate(
    provider: &dyn LanguageModel,
    agent: &AgentConfig,
    templates: &PromptTemplates,
    suite: &[SyntheticTask],
    n_chunks: &[usize],
    pool: &rayon::ThreadPool,
) -> Result<EvalReport> {
    let agents = n_chunks
        .iter()
        .map(|&n| {
            let cfg = AgentConfig {
                sizing: ChunkSizing::NChunks(n),
                ..agent.clone()
            };
            RecapAgent::new(provider, cfg, templates.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = pool.install(|| {
        suite
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let doc = TokenizedDocument::new(format!("task-{i}"), &task.text, provider)?;
                let baseline =
                    truncation_answer(provider, &doc, &task.question, agent.answer_max_new_tokens)?;
                let flags = agents
                    .iter()
                    .map(|a| Ok(task.recovered(&a.run(&doc, &task.question)?.answer)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(TaskOutcome {
                    seed: task.seed,
                    needle_position: task.needle_position,
                    truncation: task.recovered(&baseline),
                    agent: flags,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EvalReport {
        provider: provider.id().to_string(),
        truncation: Rate::from_flags(outcomes.iter().map(|o| o.truncation)),
        agent: n_chunks
            .iter()
            .enumerate()
            .map(|(k, &n)| ChunkSettingResult {
                n_chunks: n,
                rate: Rate::from_flags(outcomes.iter().map(|o| o.agent[k])),
            })
            .collect(),
        tasks: outcomes,
    })
}

/// Evaluate the configured generation provider on `suite`.
pub fn run_eval(config: &PipelineConfig, suite: &[SyntheticTask]) -> Result<EvalReport> {
    config.validate()?;
    let provider = config.generation.build()?;
    evaluate(
        provider.as_ref(),
        &config.agent,
        &config.templates()?,
        suite,
        &config.eval.n_chunks,
        &config.pool()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_suite, planted_repeat_document};

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            mining: MiningSettings {
                top_k: 3,
                short_window: 16,
                ..Default::default()
            },
            scoring: ProviderSelection::Oracle(AdaptiveNgramConfig {
                order: 2,
                ..Default::default()
            }),
            generation: ProviderSelection::Echo {
                max_context_tokens: DEFAULT_CAP,
            },
            retrieval: RetrievalConfig {
                window_size: 16,
                step_size: 8,
            },
            ..Default::default()
        }
    }

    fn planted_docs(n: u64) -> Vec<InputDocument> {
        (0..n)
            .map(|s| InputDocument {
                id: format!("p{s}"),
                text: planted_repeat_document(s, 16).text,
            })
            .collect()
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = PipelineConfig::from_toml(
            r#"
            seed = 4
            workers = 2
            [scoring]
            kind = "oracle"
            order = 2
            [generation]
            kind = "remote"
            endpoint_url = "http://localhost:9/v1/completions"
            [mining]
            top_k = 3
            short_window = 32
            [agent]
            sizing = { n_chunks = 5 }
            recap_budget = 100
            recap_max_new_tokens = 20
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.scoring.kind(), "oracle");
        assert_eq!(cfg.agent.sizing, ChunkSizing::NChunks(5));
        assert_eq!(cfg.agent.compaction_fraction, 0.5);
        assert_eq!(cfg.mining.to_config().suppression_radius, 8);
        cfg.validate().unwrap();
        let again = PipelineConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(PipelineConfig::from_toml("sed = 1").is_err());
        let cfg = PipelineConfig {
            workers: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ProviderSelection::from_kind("gpt").is_err());
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let out = run_mine(&small_config(), &[]).unwrap();
        assert!(out.lines.is_empty());
        assert_eq!(out.report, MineReport::default());
    }

    #[test]
    fn planted_documents_get_overlapping_recaps() {
        let docs = planted_docs(10);
        let out = run_mine(&small_config(), &docs).unwrap();
        assert_eq!(out.lines.len(), 10);
        assert!(out.report.failures.is_empty());
        for (seed, line) in out.lines.iter().enumerate() {
            let rec: CorpusRecord = serde_json::from_str(line).unwrap();
            let p = planted_repeat_document(seed as u64, 16);
            assert!(rec.recaps.iter().any(
                |r| r.segment_start <= p.first_position + 1 && p.first_position < r.segment_end
            ));
        }
    }

    #[test]
    fn mining_is_worker_count_independent() {
        let docs = planted_docs(6);
        let mut cfg = small_config();
        let one = run_mine(&cfg, &docs).unwrap();
        cfg.workers = 4;
        assert_eq!(run_mine(&cfg, &docs).unwrap(), one);
        cfg.dry_run = true;
        let dry = run_mine(&cfg, &docs).unwrap();
        assert!(dry.lines.iter().all(|l| l.contains("\"key_position\"")));
    }

    #[test]
    fn tagged_input_is_a_failure() {
        let docs = vec![InputDocument {
            id: "bad".into(),
            text: "a <re>b</re> c".into(),
        }];
        let out = run_mine(&small_config(), &docs).unwrap();
        assert_eq!(out.report.failures.len(), 1);
        assert!(out.lines.is_empty());
    }

    #[test]
    fn read_jsonl_and_plain() {
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("in.jsonl");
        std::fs::write(
            &jsonl,
            "{\"id\":\"x\",\"text\":\"a b\"}\n\n{\"text\":\"c\"}\n",
        )
        .unwrap();
        let docs = read_documents(&jsonl).unwrap();
        assert_eq!(
            docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(),
            vec!["x", "doc-1"]
        );
        let plain = dir.path().join("story.txt");
        std::fs::write(&plain, "Once.").unwrap();
        assert_eq!(read_documents(&plain).unwrap()[0].id, "story");
        std::fs::write(&plain, "  \n").unwrap();
        assert!(read_documents(&plain).unwrap().is_empty());
    }

    #[test]
    fn score_emits_every_position() {
        let docs = planted_docs(2);
        let out = run_score(&small_config(), &docs).unwrap();
        let total: usize = docs.iter().map(|d| d.text.split_whitespace().count()).sum();
        assert_eq!(out.lines.len(), total);
    }

    #[test]
    fn eval_agent_beats_truncation_on_early_needles() {
        let cap = 128;
        let provider = ExtractiveDouble::new(NEEDLE_MARKER, cap);
        let agent = AgentConfig {
            sizing: ChunkSizing::NChunks(1),
            recap_budget: 40,
            recap_max_new_tokens: 20,
            answer_max_new_tokens: 40,
            compaction_fraction: 0.5,
        };
        let suite = generate_suite(5, 5, 8 * cap, Some(0.1));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        let report = evaluate(
            &provider,
            &agent,
            &PromptTemplates::default(),
            &suite,
            &[16, 24],
            &pool,
        )
        .unwrap();
        assert_eq!(report.truncation.rate, 0.0);
        assert!(report.agent.iter().all(|c| c.rate.rate == 1.0));
    }
}
