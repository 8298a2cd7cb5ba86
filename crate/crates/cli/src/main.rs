use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use recap_core::agent::ChunkSizing;
use recap_core::harness::{self, InputDocument, PipelineConfig, ProviderSelection};
use recap_core::synthetic::{generate_suite, SyntheticTask};

#[derive(Parser)]
#[command(
    name = "recap",
    version,
    about = "Recap mining, scoring and the recap agent"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Generation provider: oracle, echo, extractive, lossy or remote.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Scoring provider used by score and mine.
    #[arg(long, global = true)]
    scoring_provider: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-token gap records as JSON lines.
    Score {
        #[arg(long, short)]
        input: Option<PathBuf>,
    },
    /// Recap-augmented corpus records as JSON lines.
    Mine {
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Emit selection records and skip generation.
        #[arg(long)]
        dry_run: bool,
        /// Where to write the JSON summary; stderr when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the recap agent on one document and print its transcript.
    Agent {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        question: String,
        #[arg(long, conflicts_with = "chunk_tokens")]
        n_chunks: Option<usize>,
        #[arg(long)]
        chunk_tokens: Option<usize>,
        /// Recap budget in tokens.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Agent versus truncation on synthetic needle tasks.
    Eval {
        /// JSON lines of tasks; generated from the seed when omitted.
        #[arg(long, short)]
        suite: Option<PathBuf>,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        needle_position: Option<f64>,
        /// Comma-separated chunk counts.
        #[arg(long, value_delimiter = ',')]
        n_chunks: Option<Vec<usize>>,
    },
    /// Write synthetic needle tasks as JSON lines.
    GenSynthetic {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1200)]
        length: usize,
        #[arg(long)]
        needle_position: Option<f64>,
    },
}

fn selection(current: &ProviderSelection, kind: &str) -> Result<ProviderSelection> {
    if current.kind() == kind {
        Ok(current.clone())
    } else {
        Ok(ProviderSelection::from_kind(kind)?)
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(k) = &g.provider {
        cfg.generation = selection(&cfg.generation, k)?;
    }
    if let Some(k) = &g.scoring_provider {
        cfg.scoring = selection(&cfg.scoring, k)?;
    }
    if let Some(o) = &g.output {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

fn input_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    match flag.or_else(|| cfg.input.clone()) {
        Some(p) => Ok(p),
        None => bail!("no input file given (use --input or set `input` in the config)"),
    }
}

fn read_docs(path: &Path) -> Result<Vec<InputDocument>> {
    harness::read_documents(path).with_context(|| format!("reading {}", path.display()))
}

fn sink(cfg: &PipelineConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_lines(cfg: &PipelineConfig, lines: &[String]) -> Result<()> {
    let mut out = sink(cfg)?;
    for l in lines {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

fn write_json(cfg: &PipelineConfig, value: serde_json::Value) -> Result<()> {
    let mut out = sink(cfg)?;
    serde_json::to_writer_pretty(&mut out, &value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_suite(path: &Path) -> Result<Vec<SyntheticTask>> {
    let raw =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).context("parsing task"))
        .collect()
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Score { input } => {
            let docs = read_docs(&input_path(input, &cfg)?)?;
            let out = harness::run_score(&cfg, &docs)?;
            write_lines(&cfg, &out.lines)?;
            for f in &out.report.failures {
                log::error!("{}: {}", f.doc_id, f.error);
            }
            Ok(out.report.failures.is_empty())
        }
        Command::Mine {
            input,
            dry_run,
            report,
        } => {
            cfg.dry_run |= dry_run;
            let docs = read_docs(&input_path(input, &cfg)?)?;
            let out = harness::run_mine(&cfg, &docs)?;
            write_lines(&cfg, &out.lines)?;
            let summary = serde_json::to_string_pretty(&out.report)?;
            match report {
                Some(p) => std::fs::write(&p, summary + "\n")
                    .with_context(|| format!("writing {}", p.display()))?,
                None => eprintln!("{summary}"),
            }
            Ok(out.report.failures.is_empty())
        }
        Command::Agent {
            input,
            question,
            n_chunks,
            chunk_tokens,
            budget,
        } => {
            if let Some(n) = n_chunks {
                cfg.agent.sizing = ChunkSizing::NChunks(n);
            }
            if let Some(t) = chunk_tokens {
                cfg.agent.sizing = ChunkSizing::ChunkTokens(t);
            }
            if let Some(b) = budget {
                cfg.agent.recap_budget = b;
            }
            let path = input_path(input, &cfg)?;
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let doc = InputDocument {
                id: path
                    .file_stem()
                    .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
                text,
            };
            let transcript = harness::run_agent(&cfg, &doc, &question)?;
            write_json(&cfg, serde_json::to_value(transcript)?)?;
            Ok(true)
        }
        Command::Eval {
            suite,
            tasks,
            length,
            needle_position,
            n_chunks,
        } => {
            if let Some(t) = tasks {
                cfg.eval.tasks = t;
            }
            if let Some(l) = length {
                cfg.eval.length_tokens = l;
            }
            if needle_position.is_some() {
                cfg.eval.needle_position = needle_position;
            }
            if let Some(n) = n_chunks {
                cfg.eval.n_chunks = n;
            }
            let suite = match suite {
                Some(p) => read_suite(&p)?,
                None => generate_suite(
                    cfg.seed,
                    cfg.eval.tasks,
                    cfg.eval.length_tokens,
                    cfg.eval.needle_position,
                ),
            };
            let report = harness::run_eval(&cfg, &suite)?;
            write_json(&cfg, serde_json::to_value(report)?)?;
            Ok(true)
        }
        Command::GenSynthetic {
            count,
            length,
            needle_position,
        } => {
            let lines = generate_suite(cfg.seed, count, length, needle_position)
                .iter()
                .map(serde_json::to_string)
                .collect::<Result<Vec<_>, _>>()?;
            write_lines(&cfg, &lines)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
