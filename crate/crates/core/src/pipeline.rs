//! File-based stages tying ingestion, sampling, summarization, training and
//! evaluation together, plus the flat `key = value` configuration format.
//!
//! Every stage reads and writes files in one working directory (see
//! [`Layout`]); outputs are written atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, EvalReport, ScoreRow, ScoreSet, SynthConfig};
use crate::ingest::{
    ingest_reader, read_labels_csv, split_dataset, Chain, DatasetSplits, IngestReport, InputFormat, LabelReport,
    NodeId, SplitRatios, TransactionGraph,
};
use crate::io::{read_to_string, write_atomic};
use crate::model::{DualPathParams, TextEmbedder};
use crate::subgraph::{build_subgraphs, read_subgraphs_jsonl, write_subgraphs_jsonl, SamplingConfig, Subgraph};
use crate::summary::{
    build_forensic_prompt, cache_key, summarize_accounts, AccountDossier, EvidenceStore, PromptConfig,
    RemoteConfig, SplitPolicy, Summarizer, TransactionSummary,
};
use crate::train::{alternate_train, log_to_jsonl, predict_nodes, BestEpoch, Corpus, LogEntry, TrainConfig};

/// Everything configurable from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sampling: SamplingConfig,
    pub train: TrainConfig,
    pub ratios: SplitRatios,
    pub template_version: String,
    pub row_budget: usize,
    pub max_in_flight: usize,
    pub embed_seed: u64,
    pub threshold: f64,
    pub synth: SynthConfig,
    #[serde(skip)]
    pub remote: RemoteSettings,
}

/// Remote summarizer settings; the token itself only comes from the
/// environment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RemoteSettings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub token_env: Option<String>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
}

impl RemoteSettings {
    pub fn to_config(&self) -> RemoteConfig {
        let d = RemoteConfig::default();
        RemoteConfig {
            endpoint: self.endpoint.clone().unwrap_or(d.endpoint),
            model: self.model.clone().unwrap_or(d.model),
            token_env: self.token_env.clone().unwrap_or(d.token_env),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
            temperature: self.temperature.unwrap_or(d.temperature),
            timeout: self.timeout_secs.map_or(d.timeout, Duration::from_secs),
            max_attempts: self.max_attempts.unwrap_or(d.max_attempts),
            backoff: self.backoff_ms.map_or(d.backoff, Duration::from_millis),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sampling: SamplingConfig::default(),
            train: TrainConfig::default(),
            ratios: SplitRatios::default(),
            template_version: crate::summary::DEFAULT_TEMPLATE_VERSION.into(),
            row_budget: crate::summary::DEFAULT_ROW_BUDGET,
            max_in_flight: 8,
            embed_seed: 0,
            threshold: 0.5,
            synth: SynthConfig::default(),
            remote: RemoteSettings::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    /// Sets one key. `seed` applies to the split, training and synthetic
    /// corpus alike.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let s = &mut self.sampling;
        let y = &mut self.synth;
        let r = &mut self.remote;
        match key {
            "hops" | "h" => s.hops = parse_value(key, v)?,
            "per_hop" | "k" => s.per_hop = parse_value(key, v)?,
            "budget" | "n_c" => s.budget = parse_value(key, v)?,
            "beta" => s.beta = parse_value(key, v)?,
            "outer_epochs" => t.outer_epochs = parse_value(key, v)?,
            "inner_epochs" => t.inner_epochs = parse_value(key, v)?,
            "lr_policy" => t.lr_policy = parse_value(key, v)?,
            "lr_gnn" => t.lr_gnn = parse_value(key, v)?,
            "ema_momentum" => t.ema_momentum = parse_value(key, v)?,
            "lambda_resi" | "lambda1" => t.lambda_resi = parse_value(key, v)?,
            "lambda_orth" | "lambda2" => t.lambda_orth = parse_value(key, v)?,
            "weight_decay" => t.weight_decay = parse_value(key, v)?,
            "early_stop_patience" => t.early_stop_patience = parse_value(key, v)?,
            "embed_dim" => t.embed_dim = parse_value(key, v)?,
            "hidden_dim" => t.hidden_dim = parse_value(key, v)?,
            "policy_temperature" => t.policy_temperature = parse_value(key, v)?,
            "seed" => {
                let seed: u64 = parse_value(key, v)?;
                t.seed = seed;
                y.seed = seed;
            }
            "train_ratio" => self.ratios.train = parse_value(key, v)?,
            "val_ratio" => self.ratios.val = parse_value(key, v)?,
            "test_ratio" => self.ratios.test = parse_value(key, v)?,
            "template_version" => self.template_version = v.to_string(),
            "row_budget" => self.row_budget = parse_value(key, v)?,
            "max_in_flight" => self.max_in_flight = parse_value(key, v)?,
            "embed_seed" => self.embed_seed = parse_value(key, v)?,
            "threshold" => self.threshold = parse_value(key, v)?,
            "synth_accounts" => y.n_accounts = parse_value(key, v)?,
            "synth_fraud_ratio" => y.fraud_ratio = parse_value(key, v)?,
            "synth_fan_width" => y.fan_width = parse_value(key, v)?,
            "synth_hub_ratio" => y.hub_ratio = parse_value(key, v)?,
            "synth_span_days" => y.span_days = parse_value(key, v)?,
            "synth_mix_fan_in" => y.motif_mix.fan_in = parse_value(key, v)?,
            "synth_mix_fan_out" => y.motif_mix.fan_out = parse_value(key, v)?,
            "synth_mix_relay" => y.motif_mix.relay = parse_value(key, v)?,
            "synth_mix_burst" => y.motif_mix.burst = parse_value(key, v)?,
            "remote_endpoint" => r.endpoint = Some(v.to_string()),
            "remote_model" => r.model = Some(v.to_string()),
            "remote_token_env" => r.token_env = Some(v.to_string()),
            "remote_max_tokens" => r.max_tokens = Some(parse_value(key, v)?),
            "remote_temperature" => r.temperature = Some(parse_value(key, v)?),
            "remote_timeout_secs" => r.timeout_secs = Some(parse_value(key, v)?),
            "remote_max_attempts" => r.max_attempts = Some(parse_value(key, v)?),
            "remote_backoff_ms" => r.backoff_ms = Some(parse_value(key, v)?),
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.train.validate()?;
        if self.max_in_flight == 0 || self.row_budget == 0 {
            return Err(Error::Config("max_in_flight and row_budget must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    pub fn prompt_config(&self) -> PromptConfig {
        PromptConfig { template_version: self.template_version.clone(), row_budget: self.row_budget, ..Default::default() }
    }

    pub fn embedder(&self) -> Result<TextEmbedder> {
        TextEmbedder::hashed(self.train.embed_dim, self.embed_seed)
    }
}

/// File names inside a working directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Layout { dir: dir.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn graph(&self) -> PathBuf {
        self.file("graph.json")
    }
    pub fn ingest_report(&self) -> PathBuf {
        self.file("ingest_report.json")
    }
    pub fn splits(&self) -> PathBuf {
        self.file("splits.json")
    }
    pub fn subgraphs(&self) -> PathBuf {
        self.file("subgraphs.jsonl")
    }
    pub fn evidence(&self) -> PathBuf {
        self.file("evidence.jsonl")
    }
    pub fn model(&self) -> PathBuf {
        self.file("model.json")
    }
    pub fn policy(&self) -> PathBuf {
        self.file("policy.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.file("train_log.jsonl")
    }
    pub fn train_meta(&self) -> PathBuf {
        self.file("train_meta.json")
    }
    pub fn scores(&self) -> PathBuf {
        self.file("scores.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.file("report.csv")
    }
    pub fn curve(&self) -> PathBuf {
        self.file("curve.csv")
    }
    pub fn transactions(&self) -> PathBuf {
        self.file("transactions.csv")
    }
    pub fn labels(&self) -> PathBuf {
        self.file("labels.csv")
    }

    pub fn ensure(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }
}

/// Train/val/test membership by account id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitsFile {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitsFile {
    pub fn from_splits(s: &DatasetSplits, graph: &TransactionGraph) -> Self {
        let ids = |v: &[NodeId]| v.iter().map(|&n| graph.id(n).to_string()).collect();
        SplitsFile { train: ids(&s.train), val: ids(&s.val), test: ids(&s.test) }
    }

    pub fn to_splits(&self, graph: &TransactionGraph) -> Result<DatasetSplits> {
        let nodes = |v: &[String]| {
            v.iter()
                .map(|a| graph.node(a).ok_or_else(|| Error::NotFound(format!("split account {a} not in graph"))))
                .collect::<Result<Vec<_>>>()
        };
        Ok(DatasetSplits { train: nodes(&self.train)?, val: nodes(&self.val)?, test: nodes(&self.test)? })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn synthgen_stage(layout: &Layout, cfg: &SynthConfig) -> Result<(usize, usize)> {
    layout.ensure()?;
    let corpus = crate::eval::synthgen(cfg)?;
    write_atomic(&layout.transactions(), corpus.transactions_csv()?.as_bytes())?;
    write_atomic(&layout.labels(), corpus.labels_csv().as_bytes())?;
    Ok((corpus.transactions.len(), corpus.labels.len()))
}

pub fn ingest_stage(layout: &Layout, input: &Path, chain: Chain) -> Result<IngestReport> {
    layout.ensure()?;
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let (graph, report) = ingest_reader(std::io::BufReader::new(file), InputFormat::from_path(input), chain)?;
    if graph.node_count() == 0 {
        return Err(Error::Data(format!("{} contains no usable transactions", input.display())));
    }
    graph.save(&layout.graph())?;
    write_json(&layout.ingest_report(), &report)?;
    Ok(report)
}

pub fn label_stage(layout: &Layout, labels: &Path) -> Result<LabelReport> {
    let mut graph = TransactionGraph::load(&layout.graph())?;
    let file = std::fs::File::open(labels).map_err(|e| Error::io(labels, e))?;
    let rows = read_labels_csv(std::io::BufReader::new(file))?;
    let report = graph.attach_labels(rows.iter().map(|(a, l)| (a.as_str(), *l)))?;
    graph.save(&layout.graph())?;
    Ok(report)
}

pub fn split_stage(layout: &Layout, cfg: &PipelineConfig) -> Result<DatasetSplits> {
    let graph = TransactionGraph::load(&layout.graph())?;
    let splits = split_dataset(&graph.labeled_nodes(), cfg.ratios, cfg.train.seed)?;
    write_json(&layout.splits(), &SplitsFile::from_splits(&splits, &graph))?;
    Ok(splits)
}

fn load_splits(layout: &Layout, graph: &TransactionGraph) -> Result<DatasetSplits> {
    read_json::<SplitsFile>(&layout.splits())?.to_splits(graph)
}

/// Subgraphs for every account in the train/val/test splits.
pub fn subgraphs_stage(layout: &Layout, cfg: &PipelineConfig) -> Result<usize> {
    let graph = TransactionGraph::load(&layout.graph())?;
    let splits = load_splits(layout, &graph)?;
    let mut centers: Vec<NodeId> = splits.train.iter().chain(&splits.val).chain(&splits.test).copied().collect();
    centers.sort_unstable();
    let subs = build_subgraphs(&graph, &centers, &cfg.sampling)?;
    write_atomic(&layout.subgraphs(), write_subgraphs_jsonl(&subs, &graph)?.as_bytes())?;
    Ok(subs.len())
}

fn subgraph_nodes(subs: &[Subgraph]) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = subs.iter().flat_map(|s| s.nodes.iter().copied()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Summarizes every account that appears in any subgraph.
pub fn summarize_stage(layout: &Layout, cfg: &PipelineConfig, backend: &dyn Summarizer) -> Result<usize> {
    let graph = TransactionGraph::load(&layout.graph())?;
    let subs = read_subgraphs_jsonl(&read_to_string(&layout.subgraphs())?, &graph)?;
    let nodes = subgraph_nodes(&subs);
    let store = EvidenceStore::open(&layout.evidence())?;
    summarize_accounts(&graph, &nodes, backend, &store, &cfg.prompt_config(), cfg.max_in_flight)?;
    Ok(nodes.len())
}

/// Looks up each account's summary by the digest of its current prompt.
pub fn load_summaries(
    graph: &TransactionGraph,
    nodes: &[NodeId],
    store: &EvidenceStore,
    prompt: &PromptConfig,
) -> Result<Vec<TransactionSummary>> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut missing = Vec::new();
    for &n in nodes {
        let p = build_forensic_prompt(&AccountDossier::from_graph(graph, n)?, prompt)?;
        match store.get(&cache_key(&p)) {
            Some(s) => out.push(TransactionSummary { account: n, ..s }),
            None => missing.push(graph.id(n).to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSummary(format!(
            "{} account(s) have no cached summary (run summarize first), e.g. {}",
            missing.len(),
            missing.iter().take(3).cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(out)
}

fn build_corpus(layout: &Layout, cfg: &PipelineConfig) -> Result<(TransactionGraph, DatasetSplits, Corpus)> {
    let graph = TransactionGraph::load(&layout.graph())?;
    let splits = load_splits(layout, &graph)?;
    let subs = read_subgraphs_jsonl(&read_to_string(&layout.subgraphs())?, &graph)?;
    let store = EvidenceStore::open(&layout.evidence())?;
    let summaries = load_summaries(&graph, &subgraph_nodes(&subs), &store, &cfg.prompt_config())?;
    let corpus = Corpus::new(&graph, &subs, &summaries, cfg.embedder()?)?;
    Ok((graph, splits, corpus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: TrainConfig,
    pub sampling: SamplingConfig,
    pub embed_seed: u64,
    pub template_version: String,
    pub best: Option<BestEpoch>,
    pub stopped_early: bool,
    pub model_digest: String,
    pub policy_digest: String,
}

pub fn train_stage(layout: &Layout, cfg: &PipelineConfig) -> Result<(TrainMeta, Vec<LogEntry>)> {
    let (_, splits, mut corpus) = build_corpus(layout, cfg)?;
    let out = alternate_train(&mut corpus, &splits, &cfg.train)?;
    out.params.save(&layout.model())?;
    write_json(&layout.policy(), &out.policy)?;
    write_atomic(&layout.train_log(), log_to_jsonl(&out.log)?.as_bytes())?;
    let meta = TrainMeta {
        config: cfg.train.clone(),
        sampling: cfg.sampling,
        embed_seed: cfg.embed_seed,
        template_version: cfg.template_version.clone(),
        best: out.best.clone(),
        stopped_early: out.stopped_early,
        model_digest: out.params.digest(),
        policy_digest: crate::train::policy_digest(&out.policy),
    };
    write_json(&layout.train_meta(), &meta)?;
    Ok((meta, out.log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferTarget {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for InferTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(InferTarget::Train),
            "val" => Ok(InferTarget::Val),
            "test" => Ok(InferTarget::Test),
            "all" => Ok(InferTarget::All),
            other => Err(Error::Config(format!("unknown split {other:?}; expected train, val, test or all"))),
        }
    }
}

/// Scores accounts with the saved model and policy: forensic summary,
/// deterministic discriminative split, both branches, logistic head.
pub fn infer_stage(layout: &Layout, cfg: &PipelineConfig, target: InferTarget) -> Result<ScoreSet> {
    let (graph, splits, mut corpus) = build_corpus(layout, cfg)?;
    let params = DualPathParams::load(&layout.model(), cfg.train.embed_dim, cfg.train.hidden_dim)?;
    let policy: SplitPolicy = read_json(&layout.policy())?;
    policy.validate()?;
    corpus.refresh(&policy)?;
    let mut nodes: Vec<NodeId> = match target {
        InferTarget::Train => splits.train.clone(),
        InferTarget::Val => splits.val.clone(),
        InferTarget::Test => splits.test.clone(),
        InferTarget::All => corpus.centers(),
    };
    nodes.sort_unstable();
    let probs = predict_nodes(&corpus, &params, &nodes)?;
    let rows = nodes
        .iter()
        .zip(probs)
        .map(|(&n, p)| {
            let label = graph
                .label(n)
                .ok_or_else(|| Error::Precondition(format!("account {} has no label", graph.id(n))))?;
            Ok(ScoreRow { account: graph.id(n).to_string(), label: label.as_u8(), probability: p })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = ScoreSet::new(rows)?;
    scores.threshold = cfg.threshold;
    write_atomic(&layout.scores(), scores.to_csv()?.as_bytes())?;
    Ok(scores)
}

pub fn eval_stage(scores_path: &Path, report_path: &Path, threshold: f64) -> Result<EvalReport> {
    let mut scores = ScoreSet::from_csv(&read_to_string(scores_path)?)?;
    scores.threshold = threshold;
    let report = compute_metrics(&scores)?;
    write_atomic(report_path, report.to_csv()?.as_bytes())?;
    Ok(report)
}

/// Writes the metric CSV for the scores file and a per-epoch training curve
/// CSV from the log.
pub fn report_stage(layout: &Layout, cfg: &PipelineConfig) -> Result<EvalReport> {
    let report = eval_stage(&layout.scores(), &layout.report(), cfg.threshold)?;
    let log: Vec<LogEntry> = crate::io::from_jsonl(&read_to_string(&layout.train_log())?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["outer", "inner", "stage", "mean_loss", "mean_reward", "val_f1"])?;
    for e in &log {
        w.write_record([
            e.outer.to_string(),
            e.inner.to_string(),
            serde_json::to_value(e.stage)?.as_str().unwrap_or("").to_string(),
            format!("{:.12}", e.mean_loss),
            format!("{:.12}", e.mean_reward),
            e.val_f1.map_or("NA".into(), |v| format!("{v:.12}")),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&layout.curve(), &bytes)?;
    Ok(report)
}

/// Timings and results of [`run_synthetic`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvalReport,
    pub meta: TrainMeta,
    pub stage_seconds: BTreeMap<String, f64>,
}

/// `synthgen → ingest → label → split → subgraphs → summarize → train →
/// infer(test) → report` in one working directory.
pub fn run_synthetic(layout: &Layout, cfg: &PipelineConfig, backend: &dyn Summarizer) -> Result<RunSummary> {
    let mut times = BTreeMap::new();
    let mut timed = |name: &str, start: std::time::Instant| {
        times.insert(name.to_string(), start.elapsed().as_secs_f64());
    };
    let t = std::time::Instant::now();
    synthgen_stage(layout, &cfg.synth)?;
    ingest_stage(layout, &layout.transactions(), Chain::Ethereum)?;
    label_stage(layout, &layout.labels())?;
    split_stage(layout, cfg)?;
    subgraphs_stage(layout, cfg)?;
    timed("prepare", t);
    let t = std::time::Instant::now();
    summarize_stage(layout, cfg, backend)?;
    timed("summarize", t);
    let t = std::time::Instant::now();
    let (meta, _) = train_stage(layout, cfg)?;
    timed("train", t);
    let t = std::time::Instant::now();
    infer_stage(layout, cfg, InferTarget::Test)?;
    let report = report_stage(layout, cfg)?;
    timed("evaluate", t);
    Ok(RunSummary { report, meta, stage_seconds: times })
}

/// Checks every prompt that would be sent for `nodes` and every cached
/// summary against the identifier patterns. Returns how many texts were
/// scanned.
pub fn redaction_audit(
    graph: &TransactionGraph,
    nodes: &[NodeId],
    store: &EvidenceStore,
    prompt: &PromptConfig,
) -> Result<usize> {
    let mut scanned = 0;
    for &n in nodes {
        let p = build_forensic_prompt(&AccountDossier::from_graph(graph, n)?, prompt)?;
        prompt.auditor.check("prompt", &p)?;
        scanned += 1;
    }
    store.audit(&prompt.auditor)?;
    Ok(scanned + store.len())
}
