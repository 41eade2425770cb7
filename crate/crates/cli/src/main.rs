use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use clg::config::{ChatProviderKind, EmbeddingProviderKind, RunConfig};
use clg::evaluation::ConditionKind;
use clg::pipeline::{self, AgentKind, RunCondition};
use clg::service::AnnotationService;
use clg::Domain;

/// Case law grounding: retrieve precedents, select, synthesize, evaluate.
#[derive(Parser)]
#[command(name = "clg", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every step. Flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// mod | toxicity
    #[arg(long, global = true)]
    domain: Option<Domain>,
    /// Seeds the split and every other randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Retrieval windows to evaluate, e.g. 1,3,5,10,15.
    #[arg(long = "k", global = true, value_delimiter = ',')]
    k_set: Option<Vec<usize>>,
    /// Restrict to these groups.
    #[arg(long, global = true, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    embedding_provider: Option<EmbeddingArg>,
    #[arg(long, global = true)]
    embedding_model: Option<String>,
    #[arg(long, global = true)]
    embedding_dim: Option<usize>,
    #[arg(long, global = true, value_enum)]
    chat_provider: Option<ChatArg>,
    #[arg(long, global = true)]
    chat_model: Option<String>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Hash,
    Openai,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChatArg {
    Fake,
    Openai,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Case,
    Rule,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Llm,
    Mock,
    AllPrecedent,
    GoldMatch,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalConditionArg {
    Case,
    Rule,
    Knn,
    Oracle,
    HumanExample,
}

impl From<EvalConditionArg> for ConditionKind {
    fn from(c: EvalConditionArg) -> Self {
        match c {
            EvalConditionArg::Case => ConditionKind::Case,
            EvalConditionArg::Rule => ConditionKind::Rule,
            EvalConditionArg::Knn => ConditionKind::Knn,
            EvalConditionArg::Oracle => ConditionKind::Oracle,
            EvalConditionArg::HumanExample => ConditionKind::HumanExample,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus, split each group, and record the manifest.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON array of rule sets.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Keep only the N most controversial cases (needs raw ratings).
        #[arg(long, value_name = "N")]
        select_controversial: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Embed every case text into the cache.
    Embed,
    /// Retrieve the top k_max precedents for every evaluation case.
    Retrieve,
    /// Run an agent over the evaluation cases.
    Run {
        #[arg(long, value_enum)]
        condition: ConditionArg,
        #[arg(long, value_enum)]
        agent: AgentArg,
    },
    /// Sweep the retrieval window and write report.json plus CSVs.
    Evaluate {
        #[arg(long, default_value = "report")]
        report: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        conditions: Option<Vec<EvalConditionArg>>,
    },
    /// Serve the annotation API and UI bundle.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Write the report bundle with the manifest and split it came from.
    Report {
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        conditions: Option<Vec<EvalConditionArg>>,
    },
    /// Write a seeded synthetic corpus and matching rule sets.
    Synth {
        #[arg(long, default_value_t = 200)]
        cases_per_group: usize,
        #[arg(long)]
        out_corpus: PathBuf,
        #[arg(long)]
        out_rules: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = &common.workdir {
        cfg.workdir = v.clone();
    }
    if let Some(v) = common.domain {
        cfg.domain = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.k_max {
        cfg.k_max = v;
    }
    if let Some(v) = &common.k_set {
        cfg.k_set = v.clone();
    }
    if let Some(v) = &common.groups {
        cfg.groups = v.clone();
    }
    if let Some(v) = common.embedding_provider {
        cfg.embedding.provider = match v {
            EmbeddingArg::Hash => EmbeddingProviderKind::Hash,
            EmbeddingArg::Openai => EmbeddingProviderKind::OpenAi,
        };
    }
    if let Some(v) = &common.embedding_model {
        cfg.embedding.model = v.clone();
    }
    if let Some(v) = common.embedding_dim {
        cfg.embedding.dim = v;
    }
    if let Some(v) = common.chat_provider {
        cfg.chat.provider = match v {
            ChatArg::Fake => ChatProviderKind::Fake,
            ChatArg::Openai => ChatProviderKind::OpenAi,
        };
    }
    if let Some(v) = &common.chat_model {
        cfg.chat.model = v.clone();
    }
    if let Some(v) = common.concurrency {
        cfg.concurrency = v;
    }
    Ok(cfg)
}

fn conditions(arg: Option<Vec<EvalConditionArg>>) -> Option<Vec<ConditionKind>> {
    arg.map(|v| v.into_iter().map(ConditionKind::from).collect())
}

fn serve(cfg: &RunConfig) -> Result<()> {
    let data = pipeline::service_data(cfg)?;
    let svc = Arc::new(AnnotationService::open(pipeline::service_config(cfg), data)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(clg::service::serve(svc, cfg.port))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Ingest {
            corpus,
            rules,
            select_controversial,
            batch_size,
        } => {
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            let m = pipeline::ingest(&cfg, &corpus, rules.as_deref(), select_controversial)?;
            println!("ingested {} cases in {} groups into {}", m.n_cases, m.groups.len(), cfg.workdir.display());
        }
        Command::Embed => {
            let n = pipeline::embed(&cfg)?;
            println!("embedded {n} cases");
        }
        Command::Retrieve => {
            let out = pipeline::retrieve(&cfg)?;
            if out.created {
                println!("retrieved {} results into {}", out.results, out.path.display());
            } else {
                println!("retrieval already present at {}; nothing to do", out.path.display());
            }
        }
        Command::Run { condition, agent } => {
            let condition = match condition {
                ConditionArg::Case => RunCondition::Case,
                ConditionArg::Rule => RunCondition::Rule,
            };
            let agent = match agent {
                AgentArg::Llm => AgentKind::Llm,
                AgentArg::Mock => AgentKind::Mock,
                AgentArg::AllPrecedent => AgentKind::AllPrecedent,
                AgentArg::GoldMatch => AgentKind::GoldMatch,
            };
            let out = pipeline::run(&cfg, condition, agent)?;
            println!("{}: {} records in {}", out.agent_id, out.records, out.path.display());
        }
        Command::Evaluate { report, conditions: c } => {
            let r = pipeline::evaluate(&cfg, conditions(c).as_deref(), &report)?;
            println!("wrote {} accuracy rows to {}", r.accuracy.len(), report.display());
        }
        Command::Serve { port, quota, static_dir } => {
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(q) = quota {
                cfg.quota = q;
            }
            if static_dir.is_some() {
                cfg.static_dir = static_dir;
            }
            serve(&cfg)?;
        }
        Command::Report { out, conditions: c } => {
            pipeline::report(&cfg, conditions(c).as_deref(), &out)?;
            println!("wrote report bundle to {}", out.display());
        }
        Command::Synth {
            cases_per_group,
            out_corpus,
            out_rules,
        } => {
            pipeline::write_synthetic(cfg.domain, cases_per_group, cfg.seed, &out_corpus, &out_rules)?;
            println!("wrote {} and {}", display(&out_corpus), display(&out_rules));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,clg=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
