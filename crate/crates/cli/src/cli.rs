//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{
    cmd_aggregate, cmd_build_lm, cmd_evaluate, cmd_extract, cmd_rank, cmd_report, cmd_train,
    parse_ranking_arg, AggregateArgs, EvalMode, ModelKind,
};
use crate::config::{Override, PipelineConfig};
use crate::manifest::RunManifest;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "iggy",
    version,
    about = "Rank scientific paper titles by how funny they are"
)]
#[command(
    after_help = "Any setting can also be given as `--section.key VALUE`, e.g. `--mlp.l2 0.5`."
)]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// worker threads (default: IGGY_THREADS, then all logical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// override any setting, e.g. `--set mlp.l2=0.5`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// more log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// only warnings and errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Iggy,
    LrBow,
    Rule,
    Fusion,
    Ensemble,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Dataset,
    IgRetrieval,
    Wild,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QuestionArg {
    Title,
    Topic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train word, POS and per-field n-gram models and the POS tagger
    BuildLm {
        #[arg(long)]
        titles: Option<PathBuf>,
        #[arg(long)]
        jokes: Option<PathBuf>,
        /// word_TAG training corpus for the POS tagger
        #[arg(long)]
        tagged: Option<PathBuf>,
        #[arg(long)]
        venue_map: Option<PathBuf>,
    },
    /// Write the feature matrix of a corpus
    Extract {
        /// corpus file (default: corpus.dataset)
        corpus: Option<PathBuf>,
    },
    /// Train a model on the labeled dataset
    Train {
        #[arg(value_enum)]
        model: ModelArg,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Rank a corpus with a trained model
    Rank {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// corpus file (default: corpus.titles)
        corpus: Option<PathBuf>,
        /// keep only the best N titles
        #[arg(long, value_name = "N")]
        top: Option<usize>,
    },
    /// Evaluate on the dataset, the retrieval test set or crowd-labeled rankings
    Evaluate {
        #[arg(value_enum)]
        mode: ModeArg,
        /// ranking TSV as NAME=PATH (wild mode; repeatable)
        #[arg(long = "ranking", value_name = "NAME=PATH")]
        rankings: Vec<String>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        winners: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Turn crowd ratings into labels with a decision rule
    Aggregate {
        /// annotation CSV (default: eval.annotations)
        annotations: Option<PathBuf>,
        /// explicit rule: at least K raters gave at least M
        #[arg(long, value_name = "K,M", value_parser = parse_rule)]
        rule: Option<(usize, u8)>,
        /// choose the rule that best matches --gold or --expert
        #[arg(long)]
        select: bool,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        expert: Option<PathBuf>,
        #[arg(long, value_enum)]
        question: Option<QuestionArg>,
    },
    /// Feature significance tests and ranking agreement
    Report {
        /// feature CSV from `extract` (default: extract from the dataset)
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long = "ranking", value_name = "NAME=PATH")]
        rankings: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn parse_rule(s: &str) -> std::result::Result<(usize, u8), String> {
    let (k, m) = s
        .split_once(',')
        .ok_or_else(|| format!("expected K,M, got `{s}`"))?;
    let k = k.trim().parse().map_err(|_| format!("bad K in `{s}`"))?;
    let m = m.trim().parse().map_err(|_| format!("bad M in `{s}`"))?;
    Ok((k, m))
}

/// Rewrites `--a.b VALUE` and `--a.b=VALUE` into `--set a.b=VALUE`.
pub fn expand_dotted_flags(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(s) = a.to_str().filter(|s| s.starts_with("--")) else {
            out.push(a);
            continue;
        };
        if s == "--" {
            out.push(a);
            out.extend(it);
            break;
        }
        let body = &s[2..];
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            out.push(a);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => match it.next() {
                Some(v) => v.to_string_lossy().into_owned(),
                None => bail!("option --{key} needs a value"),
            },
        };
        out.push("--set".into());
        out.push(format!("{key}={value}").into());
    }
    Ok(out)
}

/// 3 for numeric failures anywhere in the error chain, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numeric = err.chain().any(|e| {
        e.downcast_ref::<iggy_core::Error>()
            .is_some_and(|e| e.is_numeric())
    });
    if numeric {
        EXIT_NUMERIC
    } else {
        EXIT_INPUT
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run(args: Vec<OsString>) -> Result<RunManifest> {
    let args = expand_dotted_flags(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            e.print()?;
            std::process::exit(0);
        }
        Err(e) => {
            e.print()?;
            std::process::exit(EXIT_INPUT);
        }
    };
    init_logging(cli.verbose, cli.quiet);

    let mut overrides = Vec::new();
    for s in &cli.set {
        overrides.push(Override::parse(s)?);
    }
    let mut path = |key: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            overrides.push(Override::path(key, p));
        }
    };
    path("out", &cli.out);
    match &cli.command {
        Command::BuildLm {
            titles,
            jokes,
            tagged,
            venue_map,
        } => {
            path("corpus.titles", titles);
            path("corpus.jokes", jokes);
            path("corpus.tagged", tagged);
            path("corpus.venue_map", venue_map);
        }
        Command::Train { dataset, .. } | Command::Report { dataset, .. } => {
            path("corpus.dataset", dataset)
        }
        Command::Evaluate {
            annotations,
            winners,
            dataset,
            ..
        } => {
            path("eval.annotations", annotations);
            path("corpus.winners", winners);
            path("corpus.dataset", dataset);
        }
        Command::Aggregate {
            annotations,
            question,
            ..
        } => {
            path("eval.annotations", annotations);
            if let Some(q) = question {
                let q = match q {
                    QuestionArg::Title => "title",
                    QuestionArg::Topic => "topic",
                };
                overrides.push(Override {
                    key: "eval.question".into(),
                    value: toml::Value::String(q.into()),
                });
            }
        }
        Command::Extract { .. } | Command::Rank { .. } => {}
    }
    if let Some(t) = cli.threads {
        overrides.push(Override::int("threads", t as u64));
    }
    if let Some(s) = cli.seed {
        overrides.push(Override::int("seed", s));
    }
    let cfg = PipelineConfig::resolve(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::BuildLm { .. } => cmd_build_lm(&cfg),
        Command::Extract { corpus } => cmd_extract(&cfg, corpus.as_deref()),
        Command::Train { model, .. } => {
            let kind = match model {
                ModelArg::Iggy => ModelKind::Iggy,
                ModelArg::LrBow => ModelKind::LrBow,
                ModelArg::Rule => ModelKind::Rule,
                ModelArg::Fusion => ModelKind::Fusion,
                ModelArg::Ensemble => ModelKind::Ensemble,
            };
            cmd_train(&cfg, kind)
        }
        Command::Rank { model, corpus, top } => cmd_rank(&cfg, &model, corpus.as_deref(), top),
        Command::Evaluate { mode, rankings, .. } => {
            let mode = match mode {
                ModeArg::Dataset => EvalMode::Dataset,
                ModeArg::IgRetrieval => EvalMode::IgRetrieval,
                ModeArg::Wild => EvalMode::Wild,
            };
            let rankings = rankings
                .iter()
                .map(|r| parse_ranking_arg(r))
                .collect::<Result<Vec<_>>>()?;
            cmd_evaluate(&cfg, mode, &rankings)
        }
        Command::Aggregate {
            rule,
            select,
            gold,
            expert,
            ..
        } => cmd_aggregate(
            &cfg,
            &AggregateArgs {
                rule,
                select,
                gold,
                expert,
            },
        ),
        Command::Report {
            features, rankings, ..
        } => {
            let rankings = rankings
                .iter()
                .map(|r| parse_ranking_arg(r))
                .collect::<Result<Vec<_>>>()?;
            cmd_report(&cfg, features.as_deref(), &rankings)
        }
    }
}
