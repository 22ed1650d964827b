use chainfraud::eval::SynthConfig;
use chainfraud::pipeline::*;
use chainfraud::summary::MockSummarizer;
use chainfraud::train::TrainConfig;
use chainfraud::{Chain, Error};

fn small_config() -> PipelineConfig {
    PipelineConfig {
        synth: SynthConfig { n_accounts: 200, ..SynthConfig::default() },
        train: TrainConfig { outer_epochs: 1, inner_epochs: 2, embed_dim: 32, hidden_dim: 8, ..TrainConfig::default() },
        ..PipelineConfig::default()
    }
}

fn prepare(layout: &Layout, cfg: &PipelineConfig) {
    synthgen_stage(layout, &cfg.synth).unwrap();
    ingest_stage(layout, &layout.transactions(), Chain::Ethereum).unwrap();
    label_stage(layout, &layout.labels()).unwrap();
    split_stage(layout, cfg).unwrap();
    subgraphs_stage(layout, cfg).unwrap();
}

#[test]
fn stages_share_one_directory() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small_config();
    prepare(&layout, &cfg);
    let mock = MockSummarizer::new();
    let n = summarize_stage(&layout, &cfg, &mock).unwrap();
    assert_eq!(mock.calls(), n);

    // A second pass is served entirely from the evidence file.
    let again = MockSummarizer::new();
    summarize_stage(&layout, &cfg, &again).unwrap();
    assert_eq!(again.calls(), 0);

    let (meta, log) = train_stage(&layout, &cfg).unwrap();
    assert!(!log.is_empty());
    assert_eq!(meta.config, cfg.train);

    let scores = infer_stage(&layout, &cfg, InferTarget::Test).unwrap();
    let bytes = std::fs::read(layout.scores()).unwrap();
    infer_stage(&layout, &cfg, InferTarget::Test).unwrap();
    assert_eq!(bytes, std::fs::read(layout.scores()).unwrap());
    assert!(scores.rows.iter().all(|r| (0.0..=1.0).contains(&r.probability)));

    let report = report_stage(&layout, &cfg).unwrap();
    assert_eq!(report.n, scores.rows.len());
    let curve = std::fs::read_to_string(layout.curve()).unwrap();
    assert_eq!(curve.lines().count(), log.len() + 1);
}

#[test]
fn training_without_summaries_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small_config();
    prepare(&layout, &cfg);
    let err = train_stage(&layout, &cfg).unwrap_err();
    assert!(matches!(err, Error::MissingSummary(_)), "{err}");
}

#[test]
fn changing_the_template_invalidates_cached_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let mut cfg = small_config();
    prepare(&layout, &cfg);
    summarize_stage(&layout, &cfg, &MockSummarizer::new()).unwrap();
    cfg.template_version = "forensic-v2".into();
    assert!(matches!(train_stage(&layout, &cfg), Err(Error::MissingSummary(_))));
}

#[test]
fn missing_inputs_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let err = split_stage(&layout, &small_config()).unwrap_err();
    assert!(err.to_string().contains("graph.json"), "{err}");
}
