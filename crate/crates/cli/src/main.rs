use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use chainfraud::pipeline::{self, InferTarget, Layout, PipelineConfig};
use chainfraud::summary::{MockSummarizer, RemoteSummarizer, Summarizer};
use chainfraud::Chain;

#[derive(Parser)]
#[command(name = "chainfraud", version, about = "Account-level fraud detection on transaction graphs")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed for splitting, training and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Mock)]
    backend: Backend,
    /// Working directory holding all stage inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainArg {
    Ethereum,
    Bitcoin,
    Generic,
}

impl From<ChainArg> for Chain {
    fn from(c: ChainArg) -> Chain {
        match c {
            ChainArg::Ethereum => Chain::Ethereum,
            ChainArg::Bitcoin => Chain::Bitcoin,
            ChainArg::Generic => Chain::Generic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (transactions.csv, labels.csv).
    Synthgen,
    /// Build the account graph from a transaction export (CSV or JSONL).
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ChainArg::Ethereum)]
        chain: ChainArg,
    },
    /// Attach `account,label` rows to the graph.
    Label { labels: PathBuf },
    /// Stratified train/val/test split of the labelled accounts.
    Split,
    /// Sample and compress one subgraph per split account.
    Subgraphs,
    /// Summarize every account that appears in a subgraph.
    Summarize,
    /// Alternate policy and encoder training.
    Train,
    /// Score accounts with the saved model (writes scores.csv).
    Infer {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Compute metrics for a scores file (writes report.csv).
    Eval {
        /// Defaults to scores.csv in the working directory.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write report.csv and the per-epoch curve.csv.
    Report,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend(cli: &Cli, cfg: &PipelineConfig) -> Result<Box<dyn Summarizer>> {
    Ok(match cli.backend {
        Backend::Mock => Box::new(MockSummarizer::new()),
        Backend::Remote => Box::new(RemoteSummarizer::new(cfg.remote.to_config())?),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let layout = Layout::new(&cli.out);
    match &cli.command {
        Command::Synthgen => {
            let (txs, labels) = pipeline::synthgen_stage(&layout, &cfg.synth)?;
            println!("synthgen: {txs} transactions, {labels} labelled accounts");
        }
        Command::Ingest { input, chain } => {
            let r = pipeline::ingest_stage(&layout, input, (*chain).into())?;
            println!(
                "ingest: {} rows, {} retained, {} dropped (zero amount), {} dropped (failed), {} rejected",
                r.rows,
                r.retained,
                r.dropped_zero_amount,
                r.dropped_failed,
                r.rejected_total()
            );
        }
        Command::Label { labels } => {
            let r = pipeline::label_stage(&layout, labels)?;
            println!("label: {} attached, {} not in graph", r.attached, r.skipped_missing);
        }
        Command::Split => {
            let s = pipeline::split_stage(&layout, &cfg)?;
            println!("split: train {}, val {}, test {}", s.train.len(), s.val.len(), s.test.len());
        }
        Command::Subgraphs => {
            let n = pipeline::subgraphs_stage(&layout, &cfg)?;
            println!("subgraphs: {n} written");
        }
        Command::Summarize => {
            let b = backend(&cli, &cfg)?;
            let n = pipeline::summarize_stage(&layout, &cfg, b.as_ref())?;
            println!("summarize: {n} accounts covered");
        }
        Command::Train => {
            let (meta, log) = pipeline::train_stage(&layout, &cfg)?;
            let best = meta.best.map_or("none".into(), |b| {
                format!("outer {} inner {} val F1 {}", b.outer, b.inner, fmt_opt(b.val_f1))
            });
            println!("train: {} epochs logged, best {best}", log.len());
        }
        Command::Infer { split } => {
            let target: InferTarget = split.parse()?;
            let s = pipeline::infer_stage(&layout, &cfg, target)?;
            println!("infer: {} accounts scored", s.rows.len());
        }
        Command::Eval { scores, threshold } => {
            let scores = scores.clone().unwrap_or_else(|| layout.scores());
            layout.ensure()?;
            let r = pipeline::eval_stage(&scores, &layout.report(), threshold.unwrap_or(cfg.threshold))?;
            println!(
                "eval: precision {} recall {} f1 {} auc {} ks {}",
                fmt_opt(r.precision),
                fmt_opt(r.recall),
                fmt_opt(r.f1),
                fmt_opt(r.auc),
                fmt_opt(r.ks)
            );
        }
        Command::Report => {
            let r = pipeline::report_stage(&layout, &cfg)?;
            println!(
                "report: auc {} ks {} written to {}",
                fmt_opt(r.auc),
                fmt_opt(r.ks),
                layout.report().display()
            );
        }
    }
    Ok(())
}

/// Joins the error chain on one line, skipping causes already quoted by
/// their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
