use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Amount, Chain, Label, NodeId, RawTransaction};
use crate::error::{Error, Result};

pub const GRAPH_FORMAT: &str = "chainfraud.graph";
pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// All transfers from `src` to `dst`, aggregated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub cum_amount: Amount,
    pub tx_count: u64,
    pub first_ts: u64,
    pub last_ts: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux_sums: BTreeMap<String, Amount>,
}

/// Directed account graph with at most one edge per ordered pair.
///
/// Node ids are assigned in lexicographic order of account id and edges are
/// sorted by `(src, dst)`, so the same set of transfers always produces the
/// same graph regardless of input order. The graph is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionGraph {
    chain: Chain,
    ids: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<EdgeRecord>,
    out_index: Vec<Vec<u32>>,
    in_index: Vec<Vec<u32>>,
    labels: BTreeMap<NodeId, Label>,
}

#[derive(Default)]
struct EdgeAcc {
    cum: u128,
    count: u64,
    first: u64,
    last: u64,
    aux: BTreeMap<String, u128>,
}

pub(crate) struct GraphBuilder {
    chain: Chain,
    acc: BTreeMap<(String, String), EdgeAcc>,
}

impl GraphBuilder {
    pub(crate) fn new(chain: Chain) -> Self {
        GraphBuilder {
            chain,
            acc: BTreeMap::new(),
        }
    }

    /// Returns false if an aggregate would overflow.
    pub(crate) fn add(&mut self, tx: &RawTransaction) -> bool {
        let e = self
            .acc
            .entry((tx.from.clone(), tx.to.clone()))
            .or_insert_with(|| EdgeAcc {
                first: u64::MAX,
                ..Default::default()
            });
        let Some(cum) = e.cum.checked_add(tx.amount.0) else {
            return false;
        };
        e.cum = cum;
        e.count += 1;
        e.first = e.first.min(tx.timestamp);
        e.last = e.last.max(tx.timestamp);
        if let Some(fee) = tx.fee {
            let slot = e.aux.entry("fee".to_string()).or_default();
            *slot = slot.saturating_add(fee.0);
        }
        for (k, v) in &tx.aux {
            let slot = e.aux.entry(k.clone()).or_default();
            *slot = slot.saturating_add(*v as u128);
        }
        true
    }

    pub(crate) fn finish(self) -> TransactionGraph {
        let ids: Vec<String> = self
            .acc
            .keys()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, NodeId> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), NodeId(i as u32)))
            .collect();
        let mut edges: Vec<EdgeRecord> = self
            .acc
            .into_iter()
            .map(|((src, dst), a)| EdgeRecord {
                src: index[&src],
                dst: index[&dst],
                cum_amount: Amount(a.cum),
                tx_count: a.count,
                first_ts: a.first,
                last_ts: a.last,
                aux_sums: a.aux.into_iter().map(|(k, v)| (k, Amount(v))).collect(),
            })
            .collect();
        edges.sort_by_key(|e| (e.src, e.dst));
        TransactionGraph::from_parts(self.chain, ids, edges, BTreeMap::new())
    }
}

impl TransactionGraph {
    fn from_parts(
        chain: Chain,
        ids: Vec<String>,
        edges: Vec<EdgeRecord>,
        labels: BTreeMap<NodeId, Label>,
    ) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), NodeId(i as u32)))
            .collect();
        let mut out_index = vec![Vec::new(); ids.len()];
        let mut in_index = vec![Vec::new(); ids.len()];
        for (i, e) in edges.iter().enumerate() {
            out_index[e.src.index()].push(i as u32);
            in_index[e.dst.index()].push(i as u32);
        }
        TransactionGraph {
            chain,
            ids,
            index,
            edges,
            out_index,
            in_index,
            labels,
        }
    }

    pub fn chain(&self) -> Chain {
        self.chain
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.ids.len() as u32).map(NodeId)
    }

    pub fn account_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, node: NodeId) -> &str {
        &self.ids[node.index()]
    }

    pub fn node(&self, account: &str) -> Option<NodeId> {
        self.index.get(account).copied()
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = &EdgeRecord> + '_ {
        self.out_index[node.index()]
            .iter()
            .map(move |&i| &self.edges[i as usize])
    }

    pub fn in_edges(&self, node: NodeId) -> impl Iterator<Item = &EdgeRecord> + '_ {
        self.in_index[node.index()]
            .iter()
            .map(move |&i| &self.edges[i as usize])
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&EdgeRecord> {
        self.edges
            .binary_search_by_key(&(src, dst), |e| (e.src, e.dst))
            .ok()
            .map(|i| &self.edges[i])
    }

    /// Distinct neighbours in the undirected view, excluding the node itself.
    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .out_edges(node)
            .map(|e| e.dst)
            .chain(self.in_edges(node).map(|e| e.src))
            .filter(|&n| n != node)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn labels(&self) -> &BTreeMap<NodeId, Label> {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> Option<Label> {
        self.labels.get(&node).copied()
    }

    pub fn labeled_nodes(&self) -> Vec<(NodeId, Label)> {
        self.labels.iter().map(|(&n, &l)| (n, l)).collect()
    }

    pub(crate) fn labels_mut(&mut self) -> &mut BTreeMap<NodeId, Label> {
        &mut self.labels
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_FORMAT_VERSION,
            chain: self.chain,
            nodes: self.ids.clone(),
            edges: self.edges.clone(),
            labels: self.labels.iter().map(|(&n, &l)| (n, l)).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        if file.format != GRAPH_FORMAT || file.version != GRAPH_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported graph format {}/{} (expected {GRAPH_FORMAT}/{GRAPH_FORMAT_VERSION})",
                file.format, file.version
            )));
        }
        let n = file.nodes.len() as u32;
        for w in file.nodes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Data("graph node ids must be sorted and unique".into()));
            }
        }
        for w in file.edges.windows(2) {
            if (w[0].src, w[0].dst) >= (w[1].src, w[1].dst) {
                return Err(Error::Data("graph edges must be sorted and unique".into()));
            }
        }
        for e in &file.edges {
            if e.src.0 >= n || e.dst.0 >= n {
                return Err(Error::Data(format!("edge endpoint out of range: {e:?}")));
            }
            if e.tx_count == 0 || e.first_ts > e.last_ts {
                return Err(Error::Data(format!("invalid edge record: {e:?}")));
            }
        }
        let mut labels = BTreeMap::new();
        for (node, label) in file.labels {
            if node.0 >= n {
                return Err(Error::Data(format!("label for unknown node {}", node.0)));
            }
            labels.insert(node, label);
        }
        Ok(Self::from_parts(file.chain, file.nodes, file.edges, labels))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    chain: Chain,
    nodes: Vec<String>,
    edges: Vec<EdgeRecord>,
    labels: Vec<(NodeId, Label)>,
}
