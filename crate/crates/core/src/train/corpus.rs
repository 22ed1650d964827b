use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{NodeId, TransactionGraph};
use crate::model::{normalized_adjacency, SampleInputs, TextEmbedder};
use crate::subgraph::Subgraph;
use crate::summary::{sentence_features, split_summary, SplitMode, SplitPolicy, SummarySplit, TransactionSummary};

struct NodeText {
    summary: TransactionSummary,
    features: Vec<Vec<f64>>,
    orig: Vec<f64>,
}

struct Sample {
    nodes: Vec<NodeId>,
    a_hat: Array2<f64>,
    label: Option<f64>,
}

/// Embedded summaries and subgraphs for a set of centre accounts.
///
/// Every subgraph row other than the centre uses the deterministic split of
/// that node's own summary under the policy passed to [`Corpus::refresh`]. The
/// centre row of the discriminative and residual views comes from whichever
/// split of the centre summary is being evaluated.
pub struct Corpus {
    embedder: TextEmbedder,
    texts: HashMap<NodeId, NodeText>,
    samples: BTreeMap<NodeId, Sample>,
    split_cache: HashMap<NodeId, (Vec<f64>, Vec<f64>)>,
}

impl Corpus {
    pub fn new(
        graph: &TransactionGraph,
        subgraphs: &[Subgraph],
        summaries: &[TransactionSummary],
        embedder: TextEmbedder,
    ) -> Result<Self> {
        let by_node: HashMap<NodeId, &TransactionSummary> = summaries.iter().map(|s| (s.account, s)).collect();
        let mut missing: Vec<&str> = subgraphs
            .iter()
            .flat_map(|s| s.nodes.iter())
            .filter(|n| !by_node.contains_key(n))
            .map(|&n| graph.id(n))
            .collect();
        missing.sort_unstable();
        missing.dedup();
        if !missing.is_empty() {
            let shown: Vec<&str> = missing.iter().take(5).copied().collect();
            return Err(Error::MissingSummary(format!(
                "{} account(s) without a cached summary, e.g. {}",
                missing.len(),
                shown.join(", ")
            )));
        }
        let needed: Vec<NodeId> = {
            let mut v: Vec<NodeId> = subgraphs.iter().flat_map(|s| s.nodes.iter().copied()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let texts = needed
            .par_iter()
            .map(|n| {
                let summary = by_node[n].clone();
                let features = summary.sentences.iter().map(|s| sentence_features(s)).collect();
                let orig = embedder.embed(&summary.text)?;
                Ok((*n, NodeText { summary, features, orig }))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        let samples = subgraphs
            .iter()
            .map(|s| {
                let sample = Sample {
                    nodes: s.nodes.clone(),
                    a_hat: normalized_adjacency(&s.adjacency()),
                    label: graph.label(s.center).map(|l| l.as_f64()),
                };
                (s.center, sample)
            })
            .collect();
        Ok(Corpus { embedder, texts, samples, split_cache: HashMap::new() })
    }

    pub fn embed_dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn centers(&self) -> Vec<NodeId> {
        self.samples.keys().copied().collect()
    }

    pub fn label(&self, center: NodeId) -> Option<f64> {
        self.samples.get(&center).and_then(|s| s.label)
    }

    pub fn summary(&self, node: NodeId) -> Result<&TransactionSummary> {
        self.texts
            .get(&node)
            .map(|t| &t.summary)
            .ok_or_else(|| Error::MissingSummary(format!("node {}", node.0)))
    }

    pub fn sentence_features(&self, node: NodeId) -> Result<&[Vec<f64>]> {
        self.texts
            .get(&node)
            .map(|t| t.features.as_slice())
            .ok_or_else(|| Error::MissingSummary(format!("node {}", node.0)))
    }

    fn embed_or_zero(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            Ok(vec![0.0; self.embedder.dim()])
        } else {
            self.embedder.embed(text)
        }
    }

    pub fn embed_split(&self, split: &SummarySplit) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.embed_or_zero(&split.disc_text)?, self.embed_or_zero(&split.resi_text)?))
    }

    /// Recomputes every node's deterministic split embeddings under `policy`.
    pub fn refresh(&mut self, policy: &SplitPolicy) -> Result<()> {
        let cache = self
            .texts
            .par_iter()
            .map(|(n, t)| {
                let split = split_summary(&t.summary, policy, SplitMode::Deterministic)?;
                Ok((*n, self.embed_split(&split)?))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        self.split_cache = cache;
        Ok(())
    }

    /// Model inputs for `center`. `center_split` overrides the centre row of
    /// the discriminative and residual views.
    pub fn inputs(&self, center: NodeId, center_split: Option<(&[f64], &[f64])>) -> Result<SampleInputs> {
        let sample = self
            .samples
            .get(&center)
            .ok_or_else(|| Error::NotFound(format!("no subgraph for node {}", center.0)))?;
        if self.split_cache.is_empty() {
            return Err(Error::Precondition("corpus split features not computed; call refresh first".into()));
        }
        let n = sample.nodes.len();
        let d = self.embedder.dim();
        let mut disc = Array2::zeros((n, d));
        let mut resi = Array2::zeros((n, d));
        let mut orig = Array2::zeros((n, d));
        for (i, node) in sample.nodes.iter().enumerate() {
            let (dv, rv) = match (i, center_split) {
                (0, Some((dv, rv))) => (dv, rv),
                _ => {
                    let (dv, rv) = &self.split_cache[node];
                    (dv.as_slice(), rv.as_slice())
                }
            };
            disc.row_mut(i).assign(&ndarray::ArrayView1::from(dv));
            resi.row_mut(i).assign(&ndarray::ArrayView1::from(rv));
            orig.row_mut(i).assign(&ndarray::ArrayView1::from(self.texts[node].orig.as_slice()));
        }
        Ok(SampleInputs { a_hat: sample.a_hat.clone(), disc, resi, orig, center: 0 })
    }
}
