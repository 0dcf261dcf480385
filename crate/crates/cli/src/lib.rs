//! `concierge` operator command line.
//!
//! Exit codes: 0 success, 1 user error (bad flags, unknown post, invalid
//! input), 2 internal error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use concierge_core::analytics::{self, TopicDistribution};
use concierge_core::config::Config;
use concierge_core::corpus::{CorpusStore, IngestFormat};
use concierge_core::feedback::{self, FeedbackLog};
use concierge_core::lda::{self, fit_lda};
use concierge_core::pipeline::{self, Analysis, Models, PipelineSnapshot};
use concierge_core::recommender::Recommendation;
use concierge_core::textprep::tokenize;
use concierge_core::{Error, Result};
use concierge_service::{recommendation_query, AppState, Defaults};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "concierge", version, about = "Misinformation triage pipeline")]
pub struct Cli {
    /// Config file (TOML).
    #[arg(long, global = true, env = "CONCIERGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for stochastic stages; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add posts from a JSONL or CSV file to the store.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        format: Option<IngestFormat>,
        /// Write rejected records here as JSONL.
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Label, topic, entities, sentiment and embeddings for every post.
    Annotate,
    /// Topic distribution by label.
    Stats,
    /// Similar posts of the target label for a given post.
    Recommend {
        post_id: String,
        #[arg(short, long)]
        k: Option<String>,
        /// misleading or non-misleading
        #[arg(long)]
        target: Option<String>,
        /// strict, entity-drop or sentiment-drop
        #[arg(long)]
        relaxation: Option<String>,
    },
    /// Annotate ad-hoc text without storing it.
    Analyze {
        #[arg(long)]
        text: String,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Rebuild the snapshot with all logged feedback.
    Retrain,
    /// Dump the feedback log as JSONL.
    ExportFeedback {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotated store as JSONL, sorted by id.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit LDA over the store and print each topic's top words.
    Lda {
        #[arg(long)]
        topics: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

/// Parse `args` and run. Output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                EXIT_USER
            } else {
                EXIT_INTERNAL
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::json("output", e))?;
    writeln!(out, "{line}").map_err(write_err)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli)?;
    let json = cli.json;
    match cli.command {
        Command::Ingest { input, format, rejects } => {
            let store = CorpusStore::open(&cfg.data.store)?;
            let format = format.unwrap_or_else(|| IngestFormat::from_path(&input));
            let outcome = store.ingest(&input, format)?;
            store.snapshot().export_jsonl(&cfg.data.store)?;
            if let Some(path) = rejects {
                outcome.write_rejects(&path)?;
            }
            if json {
                print_json(out, &outcome)
            } else {
                writeln!(
                    out,
                    "accepted {} posts, rejected {}; store now holds {}",
                    outcome.accepted,
                    outcome.rejects.len(),
                    outcome.stats.total
                )
                .map_err(write_err)
            }
        }
        Command::Annotate => {
            let models = Models::from_config(&cfg)?;
            let snapshot = pipeline::annotate_store(&cfg, &models)?;
            let manifest = snapshot.manifest();
            if json {
                print_json(out, &manifest)
            } else {
                writeln!(
                    out,
                    "snapshot {}: {} posts annotated, classifier v{}, {} feedback corrections applied",
                    manifest.version, manifest.posts, manifest.models.classifier, manifest.feedback_applied
                )
                .map_err(write_err)
            }
        }
        Command::Stats => {
            let corpus = CorpusStore::open(&cfg.data.store)?.snapshot();
            let dist = analytics::topic_distribution(&corpus);
            if json {
                print_json(out, &dist)
            } else {
                print_distribution(out, &dist).map_err(write_err)
            }
        }
        Command::Recommend {
            post_id,
            k,
            target,
            relaxation,
        } => {
            let defaults = Defaults {
                k: cfg.service.default_k,
                relaxation: cfg.service.relaxation,
            };
            let q = recommendation_query(&post_id, k.as_deref(), target.as_deref(), relaxation.as_deref(), defaults)
                .map_err(|e| Error::Validation(e.message))?;
            let snapshot = restore(&cfg)?;
            let recs = snapshot.recommend(&q)?;
            if json {
                print_json(out, &recs)
            } else {
                print_recommendations(out, &recs).map_err(write_err)
            }
        }
        Command::Analyze { text } => {
            let models = Models::from_config(&cfg)?;
            let snapshot = match pipeline::read_manifest(&cfg.data.models)? {
                Some(_) => PipelineSnapshot::restore(&cfg.data.store, &cfg.data.models, &models)?,
                None => PipelineSnapshot::build(&Default::default(), &models, &Default::default(), None)?,
            };
            let analysis = snapshot.analyze(&text);
            if json {
                print_json(out, &analysis)
            } else {
                print_analysis(out, &analysis).map_err(write_err)
            }
        }
        Command::Serve { host, port } => {
            let models = Models::from_config(&cfg)?;
            let state = Arc::new(AppState::open(&cfg, &models)?);
            let host = host.unwrap_or_else(|| cfg.service.host.clone());
            let port = port.unwrap_or(cfg.service.port);
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::Config(format!("bad listen address {host}:{port}: {e}")))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Internal(e.to_string()))?;
            runtime
                .block_on(concierge_service::serve(state, addr))
                .map_err(|e| Error::Internal(format!("server failed: {e}")))
        }
        Command::Retrain => {
            let snapshot = restore(&cfg)?;
            let records = if cfg.data.feedback.exists() {
                feedback::replay(&cfg.data.feedback)?.0
            } else {
                Vec::new()
            };
            let next = snapshot.retrain(&records)?;
            next.persist(&cfg.data.store, &cfg.data.models)?;
            let manifest = next.manifest();
            if json {
                print_json(out, &manifest)
            } else {
                writeln!(
                    out,
                    "snapshot {} built from {} feedback records ({} corrections applied)",
                    manifest.version,
                    records.len(),
                    manifest.feedback_applied
                )
                .map_err(write_err)
            }
        }
        Command::ExportFeedback { out: path } => {
            let records = if cfg.data.feedback.exists() {
                FeedbackLog::open(&cfg.data.feedback)?.records().to_vec()
            } else {
                Vec::new()
            };
            match path {
                Some(p) => {
                    let file = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    feedback::export_jsonl(&records, std::io::BufWriter::new(file))
                }
                None => feedback::export_jsonl(&records, out),
            }
        }
        Command::Export { out: path } => {
            let corpus = CorpusStore::open(&cfg.data.store)?.snapshot();
            match path {
                Some(p) => corpus.export_jsonl(&p),
                None => corpus.write_jsonl(out).map_err(write_err),
            }
        }
        Command::Lda { topics, iterations, top } => {
            let models = Models::from_config(&cfg)?;
            let corpus = CorpusStore::open(&cfg.data.store)?.snapshot();
            let docs: Vec<Vec<String>> = corpus
                .sorted_by_id()
                .iter()
                .map(|p| lda::prepare_document(&tokenize(&p.post.text, &models.prep)))
                .collect();
            let mut params = cfg.lda_params();
            if let Some(k) = topics {
                params.num_topics = k;
            }
            if let Some(n) = iterations {
                params.iterations = n;
            }
            let model = fit_lda(&docs, params)?;
            let suggested = lda::suggest_lexicon(&model, top);
            if json {
                print_json(out, &suggested)
            } else {
                for entry in &suggested {
                    writeln!(out, "{:<10} {}", entry.name, entry.keywords.join(" ")).map_err(write_err)?;
                }
                Ok(())
            }
        }
    }
}

fn restore(cfg: &Config) -> Result<PipelineSnapshot> {
    let models = Models::from_config(cfg)?;
    PipelineSnapshot::restore(&cfg.data.store, &cfg.data.models, &models)
}

fn print_distribution(out: &mut dyn Write, dist: &TopicDistribution) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<28} {:>10} {:>14} {:>9} {:>7} {:>8}",
        "Topic", "Misleading", "Non-misleading", "Unlabeled", "Total", "%"
    )?;
    for r in &dist.rows {
        writeln!(
            out,
            "{:<28} {:>10} {:>14} {:>9} {:>7} {:>8}",
            r.topic, r.misleading, r.non_misleading, r.unlabeled, r.total, r.percentage
        )?;
    }
    writeln!(out, "{:<28} {:>10} {:>14} {:>9} {:>7}", "Total", "", "", "", dist.total)
}

fn print_recommendations(out: &mut dyn Write, recs: &[Recommendation]) -> std::io::Result<()> {
    if recs.is_empty() {
        return writeln!(out, "no recommendations");
    }
    writeln!(out, "{:<4} {:<12} {:>10}  {:<8} matched", "rank", "post", "similarity", "tier")?;
    for (i, r) in recs.iter().enumerate() {
        let m = &r.matched_criteria;
        let mut matched = Vec::new();
        if m.topic {
            matched.push("topic".to_string());
        }
        if m.sentiment {
            matched.push("sentiment".to_string());
        }
        matched.extend(m.entities.iter().map(|e| format!("{}:{}", e.surface, e.etype)));
        writeln!(
            out,
            "{:<4} {:<12} {:>10.4}  {:<8} {}",
            i + 1,
            r.post_id,
            r.similarity,
            if r.relaxed { "relaxed" } else { "strict" },
            matched.join(", ")
        )?;
    }
    Ok(())
}

fn print_analysis(out: &mut dyn Write, a: &Analysis) -> std::io::Result<()> {
    writeln!(out, "label      {} ({:.3})", a.label, a.label_confidence)?;
    writeln!(out, "topic      {}", a.topic.name)?;
    writeln!(out, "sentiment  {} ({:+.4})", a.sentiment.as_str(), a.sentiment_score.compound)?;
    let entities: Vec<String> = a.entities.iter().map(|e| format!("{}:{}", e.surface, e.etype)).collect();
    writeln!(out, "entities   {}", entities.join(", "))?;
    writeln!(out, "coverage   {:.2}", a.embedding_coverage)
}
