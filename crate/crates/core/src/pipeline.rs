//! Workdir-based orchestration: ingest, embed, retrieve, run agents,
//! evaluate. Each step reads what earlier steps persisted and is idempotent
//! over its own outputs.
//!
//! Layout under the workdir:
//!
//! ```text
//! manifest.json          corpus summary and seed
//! corpus.jsonl           normalized cases
//! split.json             per-group precedent/evaluation split and batches
//! rules.json             rule sets (optional)
//! embeddings/            embedding cache
//! retrieval/             retrieval-<split>-<model>-k<k_max>.jsonl
//! runs/{case,rule}/      <agent id>.jsonl records
//! transcripts/           <condition>-<agent id>.jsonl provider exchanges
//! sessions/              annotation service event logs
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    run_case_agent, run_rule_agent, AgentError, AllPrecedentAgent, CaseAgent, ChatProvider, FakeChat,
    GoldMatchAgent, LlmCaseAgent, LlmRuleAgent, RecordStore, RuleAgent, RuleDecisionRecord, RuleSet,
    TranscriptLog,
};
use crate::config::{ChatProviderKind, ConfigError, EmbeddingProviderKind, RunConfig};
use crate::corpus::{load_corpus, select_controversial, split_groups, Corpus, CorpusError, GroupSpec, GroupSplits};
use crate::decision::Domain;
use crate::embedding::{CachedEmbedder, EmbeddingCache, EmbeddingError, EmbeddingProvider, HashEmbedder, RetryPolicy};
use crate::evaluation::{run_sweep, ConditionKind, EvalError, EvalReport, SweepInputs};
use crate::jsonl::{self, JsonlError};
use crate::retrieval::{build_index, RetrievalError, RetrievalResult};
use crate::synthesis::PrecedentSelection;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] JsonlError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("workdir {0} has not been ingested; run `clg ingest` first")]
    NotIngested(String),
    #[error("no retrieval at k_max={k_max} for model {model}; run `clg retrieve` first")]
    NotRetrieved { model: String, k_max: usize },
    #[error("group `{group}` has {available} precedents, fewer than k_max={k_max}")]
    TooFewPrecedents { group: String, available: usize, k_max: usize },
    #[error("rule sets are {found}, corpus is {expected}")]
    RulesDomain { expected: Domain, found: Domain },
    #[error("no rule sets; pass --rules at ingest")]
    MissingRules,
    #[error("agent `{agent}` cannot run the {condition} condition")]
    UnsupportedAgent { agent: AgentKind, condition: RunCondition },
    #[error("{0}")]
    Provider(String),
    #[cfg(feature = "service")]
    #[error(transparent)]
    Service(#[from] crate::service::ServiceError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunCondition {
    Case,
    Rule,
}

impl std::fmt::Display for RunCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunCondition::Case => "case",
            RunCondition::Rule => "rule",
        })
    }
}

/// Which agent `run` drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// LLM agent over the configured chat provider.
    Llm,
    /// LLM agent over the offline deterministic chat provider.
    Mock,
    /// Every candidate is a precedent (KNN identity check).
    AllPrecedent,
    /// Candidates are precedents iff their gold matches the judged gold.
    GoldMatch,
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentKind::Llm => "llm",
            AgentKind::Mock => "mock",
            AgentKind::AllPrecedent => "all-precedent",
            AgentKind::GoldMatch => "gold-match",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain: Domain,
    pub seed: u64,
    pub batch_size: usize,
    pub corpus_hash: String,
    /// Hash of `split.json`; names retrieval artifacts.
    pub split_hash: String,
    pub n_cases: usize,
    pub groups: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controversial: Option<usize>,
}

/// Paths inside a workdir.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn rules(&self) -> PathBuf {
        self.root.join("rules.json")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn sessions(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn retrieval(&self, manifest: &Manifest, model_id: &str, k_max: usize) -> PathBuf {
        let model: String = model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        // golds travel inside retrieval results, so the key covers corpus content too
        let key = Sha256::digest(format!("{}:{}", manifest.corpus_hash, manifest.split_hash).as_bytes());
        self.root
            .join("retrieval")
            .join(format!("retrieval-{}-{model}-k{k_max}.jsonl", &hex::encode(key)[..12]))
    }

    pub fn runs(&self, condition: RunCondition) -> PathBuf {
        self.root.join("runs").join(condition.to_string())
    }

    pub fn transcript(&self, condition: RunCondition, agent_id: &str) -> PathBuf {
        self.root.join("transcripts").join(format!("{condition}-{agent_id}.jsonl"))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Everything `ingest` persisted, loaded back.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub manifest: Manifest,
    pub corpus: Corpus,
    pub splits: GroupSplits,
    pub rule_sets: Vec<RuleSet>,
}

impl Ingested {
    pub fn load(work: &Workdir) -> Result<Self, PipelineError> {
        if !work.manifest().exists() {
            return Err(PipelineError::NotIngested(work.root().display().to_string()));
        }
        let manifest: Manifest = read_json(&work.manifest())?;
        let corpus = load_corpus(&work.corpus(), manifest.domain)?;
        let splits: GroupSplits = read_json(&work.split())?;
        let rule_sets = if work.rules().exists() {
            read_json(&work.rules())?
        } else {
            Vec::new()
        };
        Ok(Ingested {
            manifest,
            corpus,
            splits,
            rule_sets,
        })
    }

    /// Evaluation cases of the groups the config selects, group by group.
    pub fn evaluation_cases(&self, cfg: &RunConfig) -> Vec<&crate::corpus::Case> {
        self.splits
            .iter()
            .filter(|(g, _)| cfg.wants_group(g))
            .flat_map(|(_, s)| s.evaluation_portion.iter())
            .filter_map(|id| self.corpus.get(id))
            .collect()
    }
}

pub fn validate_rule_sets(domain: Domain, rule_sets: &[RuleSet]) -> Result<(), PipelineError> {
    for r in rule_sets {
        if r.domain != domain {
            return Err(PipelineError::RulesDomain {
                expected: domain,
                found: r.domain,
            });
        }
        if r.rules.is_empty() {
            return Err(AgentError::EmptyRuleSet(r.group_id.clone()).into());
        }
    }
    Ok(())
}

/// Loads a corpus, optionally keeps only the `controversial` most
/// controversial cases, splits each group with the configured seed, and
/// writes manifest, corpus, split and rules into the workdir.
pub fn ingest(
    cfg: &RunConfig,
    corpus_path: &Path,
    rules_path: Option<&Path>,
    controversial: Option<usize>,
) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let work = Workdir::new(&cfg.workdir);
    let mut corpus = load_corpus(corpus_path, cfg.domain)?;
    if let Some(n) = controversial {
        corpus = select_controversial(&corpus, n, &GroupSpec::defaults(cfg.domain))?;
    }
    let splits = split_groups(&corpus, cfg.seed, cfg.batch_size)?;
    let rule_sets: Vec<RuleSet> = match rules_path {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    validate_rule_sets(cfg.domain, &rule_sets)?;

    let split_text = serde_json::to_string(&splits).expect("split serializes");
    let manifest = Manifest {
        domain: cfg.domain,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        corpus_hash: corpus.content_hash(),
        split_hash: hex::encode(Sha256::digest(split_text.as_bytes())),
        n_cases: corpus.len(),
        groups: corpus.group_ids(),
        controversial,
    };
    fs::create_dir_all(work.root()).map_err(io_err(work.root()))?;
    jsonl::write_all(&work.corpus(), corpus.cases())?;
    write_json(&work.split(), &splits)?;
    if !rule_sets.is_empty() {
        write_json(&work.rules(), &rule_sets)?;
    }
    write_json(&work.manifest(), &manifest)?;
    tracing::info!(cases = manifest.n_cases, groups = manifest.groups.len(), "ingested corpus");
    Ok(manifest)
}

pub fn embedding_provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    match cfg.embedding.provider {
        EmbeddingProviderKind::Hash => Ok(Box::new(HashEmbedder::new(cfg.embedding.dim))),
        #[cfg(feature = "http")]
        EmbeddingProviderKind::OpenAi => Ok(Box::new(crate::embedding::OpenAiEmbedder::from_env(
            &cfg.embedding.model,
            cfg.embedding.base_url.as_deref(),
        )?)),
        #[cfg(not(feature = "http"))]
        EmbeddingProviderKind::OpenAi => Err(PipelineError::Provider(
            "built without the `http` feature".into(),
        )),
    }
}

pub fn chat_provider(cfg: &RunConfig) -> Result<Box<dyn ChatProvider>, PipelineError> {
    match cfg.chat.provider {
        ChatProviderKind::Fake => Ok(Box::new(FakeChat::new())),
        #[cfg(feature = "http")]
        ChatProviderKind::OpenAi => Ok(Box::new(
            crate::agents::chat::OpenAiChat::from_env(&cfg.chat.model, cfg.chat.base_url.as_deref())
                .map_err(AgentError::from)?,
        )),
        #[cfg(not(feature = "http"))]
        ChatProviderKind::OpenAi => Err(PipelineError::Provider(
            "built without the `http` feature".into(),
        )),
    }
}

fn embedder(cfg: &RunConfig, work: &Workdir) -> Result<CachedEmbedder<Box<dyn EmbeddingProvider>>, PipelineError> {
    let provider = embedding_provider(cfg)?;
    let retry = match cfg.embedding.provider {
        EmbeddingProviderKind::Hash => RetryPolicy::none(),
        EmbeddingProviderKind::OpenAi => RetryPolicy::default(),
    };
    Ok(CachedEmbedder::new(provider, EmbeddingCache::open(&work.embeddings())?)
        .with_retry(retry)
        .with_batch_size(cfg.embedding.batch_size)
        .with_max_in_flight(cfg.embedding.max_in_flight))
}

/// Embeds every case text; cached texts are not sent again. Returns the
/// number of cases embedded.
pub fn embed(cfg: &RunConfig) -> Result<usize, PipelineError> {
    let work = Workdir::new(&cfg.workdir);
    let ing = Ingested::load(&work)?;
    let e = embedder(cfg, &work)?;
    let before = e.cache().len();
    let texts: Vec<&str> = ing.corpus.cases().iter().map(|c| c.text.as_str()).collect();
    e.embed_many(&texts)?;
    tracing::info!(cases = texts.len(), fetched = e.cache().len() - before, "embedded corpus");
    Ok(texts.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrieveOutcome {
    pub path: PathBuf,
    /// False when the artifact already existed and nothing was done.
    pub created: bool,
    pub results: usize,
}

/// Retrieves the top `k_max` precedents from each group's precedent portion
/// for each of the group's evaluation cases.
pub fn retrieve(cfg: &RunConfig) -> Result<RetrieveOutcome, PipelineError> {
    cfg.validate()?;
    let work = Workdir::new(&cfg.workdir);
    let ing = Ingested::load(&work)?;
    let path = work.retrieval(&ing.manifest, &cfg.embedding_model_id(), cfg.k_max);
    if path.exists() {
        let results = jsonl::read::<RetrievalResult>(&path)?.len();
        tracing::info!(path = %path.display(), "retrieval already present, nothing to do");
        return Ok(RetrieveOutcome {
            path,
            created: false,
            results,
        });
    }
    let e = embedder(cfg, &work)?;
    let vectors = e.embed_map(ing.corpus.cases().iter().map(|c| (c.id.as_str(), c.text.as_str())))?;
    let mut out = Vec::new();
    for (group, split) in &ing.splits {
        if split.precedent_portion.len() < cfg.k_max {
            return Err(PipelineError::TooFewPrecedents {
                group: group.clone(),
                available: split.precedent_portion.len(),
                k_max: cfg.k_max,
            });
        }
        let index = build_index(&ing.corpus.subset(&split.precedent_portion), &vectors)?;
        for id in &split.evaluation_portion {
            let case = ing.corpus.get(id).expect("split ids come from the corpus");
            out.push(index.retrieve_case(case, &vectors, cfg.k_max)?);
        }
    }
    jsonl::write_all(&path, &out)?;
    tracing::info!(path = %path.display(), results = out.len(), "wrote retrieval");
    Ok(RetrieveOutcome {
        path,
        created: true,
        results: out.len(),
    })
}

pub fn load_retrieval(cfg: &RunConfig, work: &Workdir, manifest: &Manifest) -> Result<HashMap<String, RetrievalResult>, PipelineError> {
    let model = cfg.embedding_model_id();
    let path = work.retrieval(manifest, &model, cfg.k_max);
    if !path.exists() {
        return Err(PipelineError::NotRetrieved { model, k_max: cfg.k_max });
    }
    Ok(jsonl::read::<RetrievalResult>(&path)?
        .into_iter()
        .map(|r| (r.judged_case_id.clone(), r))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub agent_id: String,
    pub path: PathBuf,
    pub records: usize,
}

fn mock_retry() -> RetryPolicy {
    RetryPolicy::none()
}

/// Runs one agent over every selected evaluation case. Cases already in the
/// run file are skipped, so an interrupted run resumes where it stopped.
pub fn run(cfg: &RunConfig, condition: RunCondition, agent: AgentKind) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let work = Workdir::new(&cfg.workdir);
    let ing = Ingested::load(&work)?;
    let judged = ing.evaluation_cases(cfg);
    let domain = ing.manifest.domain;

    match condition {
        RunCondition::Case => {
            let retrieval = load_retrieval(cfg, &work, &ing.manifest)?;
            let chat: Box<dyn ChatProvider> = match agent {
                AgentKind::Llm => chat_provider(cfg)?,
                _ => Box::new(FakeChat::new()),
            };
            let case_agent: Box<dyn CaseAgent> = match agent {
                AgentKind::AllPrecedent => Box::new(AllPrecedentAgent {
                    agent_id: "all-precedent".into(),
                }),
                AgentKind::GoldMatch => Box::new(GoldMatchAgent {
                    agent_id: "gold-match".into(),
                }),
                AgentKind::Mock => {
                    let mut a = LlmCaseAgent::new(chat, domain);
                    a.retry = mock_retry();
                    Box::new(a)
                }
                AgentKind::Llm => Box::new(LlmCaseAgent::new(chat, domain)),
            };
            let agent_id = case_agent.agent_id().to_string();
            let path = work.runs(condition).join(format!("{agent_id}.jsonl"));
            let store = RecordStore::<PrecedentSelection>::open(&path)?;
            let transcripts = TranscriptLog::at(&work.transcript(condition, &agent_id));
            let records = run_case_agent(
                case_agent.as_ref(),
                &judged,
                &retrieval,
                &ing.corpus,
                &store,
                &transcripts,
                cfg.concurrency,
            )?;
            tracing::info!(agent = %agent_id, records = records.len(), "case run complete");
            Ok(RunOutcome {
                agent_id,
                path,
                records: records.len(),
            })
        }
        RunCondition::Rule => {
            let chat = match agent {
                AgentKind::Llm => chat_provider(cfg)?,
                AgentKind::Mock => Box::new(FakeChat::new()) as Box<dyn ChatProvider>,
                other => return Err(PipelineError::UnsupportedAgent { agent: other, condition }),
            };
            if ing.rule_sets.is_empty() {
                return Err(PipelineError::MissingRules);
            }
            let rule_sets: HashMap<String, RuleSet> =
                ing.rule_sets.iter().map(|r| (r.group_id.clone(), r.clone())).collect();
            let mut rule_agent = LlmRuleAgent::new(chat, domain);
            if agent == AgentKind::Mock {
                rule_agent.retry = mock_retry();
            }
            let agent_id = rule_agent.agent_id().to_string();
            let path = work.runs(condition).join(format!("{agent_id}.jsonl"));
            let store = RecordStore::<RuleDecisionRecord>::open(&path)?;
            let transcripts = TranscriptLog::at(&work.transcript(condition, &agent_id));
            let records = run_rule_agent(&rule_agent, &judged, &rule_sets, &store, &transcripts, cfg.concurrency)?;
            tracing::info!(agent = %agent_id, records = records.len(), "rule run complete");
            Ok(RunOutcome {
                agent_id,
                path,
                records: records.len(),
            })
        }
    }
}

/// Source label for records exported from annotation sessions.
pub const HUMAN_SOURCE: &str = "human";

fn read_runs<T: crate::agents::AgentRecord>(dir: &Path) -> Result<BTreeMap<String, Vec<T>>, PipelineError> {
    let mut out = BTreeMap::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(io_err(dir)(e)),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let records = RecordStore::<T>::open(&p)?.all();
        out.insert(stem, records);
    }
    Ok(out)
}

/// Collects every persisted run (and annotation session) into sweep inputs.
pub fn sweep_inputs(cfg: &RunConfig) -> Result<SweepInputs, PipelineError> {
    let work = Workdir::new(&cfg.workdir);
    let ing = Ingested::load(&work)?;
    let mut inputs = SweepInputs {
        domain: Some(ing.manifest.domain),
        retrieval: load_retrieval(cfg, &work, &ing.manifest)?,
        case_runs: read_runs(&work.runs(RunCondition::Case))?,
        rule_runs: read_runs(&work.runs(RunCondition::Rule))?,
        ..Default::default()
    };
    for (group, split) in &ing.splits {
        if !cfg.wants_group(group) {
            continue;
        }
        let cases = split
            .evaluation_portion
            .iter()
            .filter_map(|id| ing.corpus.get(id))
            .map(|c| (c.id.clone(), c.gold))
            .collect();
        inputs.groups.insert(group.clone(), cases);
    }
    #[cfg(feature = "service")]
    {
        let (selections, rules) = crate::service::export_dir(&work.sessions())?;
        if !selections.is_empty() {
            inputs.case_runs.insert(HUMAN_SOURCE.into(), selections);
        }
        if !rules.is_empty() {
            inputs.rule_runs.insert(HUMAN_SOURCE.into(), rules);
        }
    }
    Ok(inputs)
}

/// CASE, KNN, ORACLE and RULE, plus HUMAN_EXAMPLE when any selection
/// carries an unconstrained final decision.
pub fn default_conditions(inputs: &SweepInputs) -> Vec<ConditionKind> {
    let mut c = vec![ConditionKind::Case, ConditionKind::Knn, ConditionKind::Oracle, ConditionKind::Rule];
    if inputs.case_runs.values().flatten().any(|s| s.final_unconstrained.is_some()) {
        c.push(ConditionKind::HumanExample);
    }
    c
}

/// Runs the sweep over all persisted runs and writes the report bundle to
/// `out`.
pub fn evaluate(
    cfg: &RunConfig,
    conditions: Option<&[ConditionKind]>,
    out: &Path,
) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let inputs = sweep_inputs(cfg)?;
    let conditions = match conditions {
        Some(c) => c.to_vec(),
        None => default_conditions(&inputs),
    };
    let report = run_sweep(&inputs, &conditions, &cfg.k_set)?;
    report.write_to(out)?;
    tracing::info!(out = %out.display(), rows = report.accuracy.len(), "wrote report");
    Ok(report)
}

/// The report bundle plus the manifest and split it was computed from.
pub fn report(cfg: &RunConfig, conditions: Option<&[ConditionKind]>, out: &Path) -> Result<EvalReport, PipelineError> {
    let report = evaluate(cfg, conditions, out)?;
    let work = Workdir::new(&cfg.workdir);
    for (from, name) in [(work.manifest(), "manifest.json"), (work.split(), "split.json")] {
        fs::copy(&from, out.join(name)).map_err(io_err(&from))?;
    }
    Ok(report)
}

/// Inputs for the annotation service, read from the workdir.
#[cfg(feature = "service")]
pub fn service_data(cfg: &RunConfig) -> Result<crate::service::ServiceData, PipelineError> {
    let work = Workdir::new(&cfg.workdir);
    let ing = Ingested::load(&work)?;
    let retrieval = load_retrieval(cfg, &work, &ing.manifest)?;
    let splits = ing
        .splits
        .into_iter()
        .filter(|(g, _)| cfg.wants_group(g))
        .collect();
    Ok(crate::service::ServiceData {
        corpus: ing.corpus,
        splits,
        retrieval,
        rule_sets: ing.rule_sets.into_iter().map(|r| (r.group_id.clone(), r)).collect(),
    })
}

#[cfg(feature = "service")]
pub fn service_config(cfg: &RunConfig) -> crate::service::ServiceConfig {
    crate::service::ServiceConfig {
        quota: cfg.quota,
        k_max: cfg.k_max,
        port: cfg.port,
        log_dir: Workdir::new(&cfg.workdir).sessions(),
        static_dir: cfg.static_dir.clone(),
        ..Default::default()
    }
}

/// Writes a synthetic corpus and matching rule sets.
pub fn write_synthetic(
    domain: Domain,
    cases_per_group: usize,
    seed: u64,
    corpus_out: &Path,
    rules_out: &Path,
) -> Result<(), PipelineError> {
    let corpus = crate::synthetic::synthetic_corpus(&crate::synthetic::SynthConfig::new(domain, cases_per_group, seed))?;
    jsonl::write_all(corpus_out, corpus.cases())?;
    write_json(rules_out, &crate::synthetic::synthetic_rule_sets(domain))?;
    Ok(())
}
