//! Account-centred subgraphs: value-guided h-hop sampling followed by
//! structural-importance compression.

mod compress;
mod sample;

use std::collections::{BTreeMap, HashMap, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Amount, Chain, EdgeRecord, NodeId, TransactionGraph};

pub use compress::{compress_sigc, importance_score, structural_importance};
pub use sample::sample_khop;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Hops to expand from the centre.
    pub hops: u32,
    /// Neighbours kept per frontier node and hop.
    pub per_hop: usize,
    /// Compression budget: neighbours retained by importance (centre excluded).
    pub budget: usize,
    /// Weight of the degree term against the flow term in the importance score.
    pub beta: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            hops: 2,
            per_hop: 10,
            budget: 10,
            beta: 2.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 || self.per_hop == 0 || self.budget == 0 {
            return Err(Error::Config(
                "hops, per_hop and budget must all be at least 1".into(),
            ));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// One-shot ranking key of a neighbour, fixed when a sampled subgraph is first
/// compressed so later compressions rank identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRank {
    pub importance: f64,
    /// Inflow plus outflow inside the subgraph, native units.
    pub flow: f64,
}

/// Neighbourhood of one centre account. `nodes[0]` is always the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub chain: Chain,
    pub center: NodeId,
    pub nodes: Vec<NodeId>,
    /// Shortest undirected hop distance from the centre, aligned with `nodes`.
    pub hop: Vec<u32>,
    /// Induced edges among `nodes`, sorted by `(src, dst)`.
    pub edges: Vec<EdgeRecord>,
    /// Present once the subgraph has been through compression; aligned with `nodes`.
    pub ranks: Option<Vec<NodeRank>>,
}

impl Subgraph {
    /// Builds a subgraph over `nodes` (centre first) with the induced edges of
    /// `graph` and BFS hop distances.
    pub(crate) fn induced(graph: &TransactionGraph, nodes: Vec<NodeId>) -> Self {
        let member: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut edges: Vec<EdgeRecord> = nodes
            .iter()
            .flat_map(|&n| graph.out_edges(n))
            .filter(|e| member.contains_key(&e.dst))
            .cloned()
            .collect();
        edges.sort_by_key(|e| (e.src, e.dst));
        let mut sub = Subgraph {
            chain: graph.chain(),
            center: nodes[0],
            nodes,
            hop: Vec::new(),
            edges,
            ranks: None,
        };
        sub.hop = sub.bfs_hops();
        sub
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    pub fn center_index(&self) -> usize {
        0
    }

    /// Undirected adjacency lists over local indices, sorted, self-loops removed.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let pos: HashMap<NodeId, usize> =
            self.nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (pos.get(&e.src), pos.get(&e.dst)) else {
                continue;
            };
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// BFS from the centre over the undirected view. Unreachable nodes get `u32::MAX`.
    pub fn bfs_hops(&self) -> Vec<u32> {
        bfs(&self.undirected_neighbors(), 0).0
    }

    /// Dense symmetric 0/1 adjacency over the node ordering, no self-loops.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.nodes.len();
        let mut a = Array2::zeros((n, n));
        for (i, list) in self.undirected_neighbors().iter().enumerate() {
            for &j in list {
                a[[i, j]] = 1.0;
            }
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_hops().iter().all(|&h| h != u32::MAX)
    }

    /// Checks the structural invariants: centre first at hop 0, hops match BFS,
    /// every node reachable, edges induced.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.first() != Some(&self.center) || self.hop.first() != Some(&0) {
            return Err(Error::Data("subgraph centre must be first with hop 0".into()));
        }
        if self.hop.len() != self.nodes.len() {
            return Err(Error::Data("hop vector length differs from node count".into()));
        }
        if self.hop != self.bfs_hops() || self.hop.contains(&u32::MAX) {
            return Err(Error::Data(format!(
                "subgraph around node {} is disconnected or has stale hops",
                self.center.0
            )));
        }
        if let Some(r) = &self.ranks {
            if r.len() != self.nodes.len() {
                return Err(Error::Data("rank vector length differs from node count".into()));
            }
        }
        Ok(())
    }

    pub fn to_record(&self, graph: &TransactionGraph) -> SubgraphRecord {
        SubgraphRecord {
            center: graph.id(self.center).to_string(),
            nodes: self.nodes.iter().map(|&n| graph.id(n).to_string()).collect(),
            hop: self
                .nodes
                .iter()
                .zip(&self.hop)
                .map(|(&n, &h)| (graph.id(n).to_string(), h))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRow {
                    src: graph.id(e.src).to_string(),
                    dst: graph.id(e.dst).to_string(),
                    cum_amount: e.cum_amount,
                    tx_count: e.tx_count,
                    first_ts: e.first_ts,
                    last_ts: e.last_ts,
                    aux_sums: e.aux_sums.clone(),
                })
                .collect(),
            ranks: self.ranks.clone(),
        }
    }

    pub fn from_record(record: &SubgraphRecord, graph: &TransactionGraph) -> Result<Self> {
        let lookup = |id: &str| {
            graph
                .node(id)
                .ok_or_else(|| Error::NotFound(format!("account {id} in cached subgraph")))
        };
        let nodes = record
            .nodes
            .iter()
            .map(|id| lookup(id))
            .collect::<Result<Vec<_>>>()?;
        let hop = record
            .nodes
            .iter()
            .map(|id| {
                record
                    .hop
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("no hop for {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = record
            .edges
            .iter()
            .map(|e| {
                Ok(EdgeRecord {
                    src: lookup(&e.src)?,
                    dst: lookup(&e.dst)?,
                    cum_amount: e.cum_amount,
                    tx_count: e.tx_count,
                    first_ts: e.first_ts,
                    last_ts: e.last_ts,
                    aux_sums: e.aux_sums.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sub = Subgraph {
            chain: graph.chain(),
            center: lookup(&record.center)?,
            nodes,
            hop,
            edges,
            ranks: record.ranks.clone(),
        };
        sub.validate()?;
        Ok(sub)
    }
}

/// Returns (distance, parent) arrays; parent of the source and unreachable nodes is `usize::MAX`.
pub(crate) fn bfs(adj: &[Vec<usize>], source: usize) -> (Vec<u32>, Vec<usize>) {
    let mut dist = vec![u32::MAX; adj.len()];
    let mut parent = vec![usize::MAX; adj.len()];
    if adj.is_empty() {
        return (dist, parent);
    }
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    (dist, parent)
}

/// Line-delimited JSON form of a subgraph, keyed by account id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphRecord {
    pub center: String,
    pub nodes: Vec<String>,
    pub hop: BTreeMap<String, u32>,
    pub edges: Vec<EdgeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<NodeRank>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub src: String,
    pub dst: String,
    pub cum_amount: Amount,
    pub tx_count: u64,
    pub first_ts: u64,
    pub last_ts: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux_sums: BTreeMap<String, Amount>,
}

pub fn write_subgraphs_jsonl(subs: &[Subgraph], graph: &TransactionGraph) -> Result<String> {
    crate::io::to_jsonl(subs.iter().map(|s| s.to_record(graph)))
}

pub fn read_subgraphs_jsonl(text: &str, graph: &TransactionGraph) -> Result<Vec<Subgraph>> {
    crate::io::from_jsonl::<SubgraphRecord>(text)?
        .iter()
        .map(|r| Subgraph::from_record(r, graph))
        .collect()
}

/// Samples and compresses the subgraph of every centre, in parallel.
pub fn build_subgraphs(
    graph: &TransactionGraph,
    centers: &[NodeId],
    cfg: &SamplingConfig,
) -> Result<Vec<Subgraph>> {
    use rayon::prelude::*;
    cfg.validate()?;
    centers
        .par_iter()
        .map(|&c| sample_khop(graph, c, cfg).map(|s| compress_sigc(&s, cfg)))
        .collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::collections::BTreeMap;

    use crate::ingest::{ingest_transactions, Amount, Chain, RawTransaction, TransactionGraph, TxStatus};

    /// Generic-chain graph from `(from, to, native amount, count)` tuples.
    pub fn graph(edges: &[(&str, &str, f64, u64)]) -> TransactionGraph {
        let mut txs = Vec::new();
        for &(f, t, amount, count) in edges {
            let base = (amount * 1e8).round() as u128;
            for i in 0..count {
                // Spread the amount so the edge sum is exact.
                let share = base / count as u128 + u128::from(i == 0) * (base % count as u128);
                txs.push(Ok(RawTransaction {
                    chain: Chain::Generic,
                    tx_id: format!("{f}-{t}-{i}"),
                    from: f.into(),
                    to: t.into(),
                    amount: Amount(share),
                    timestamp: 1_000 + i,
                    fee: None,
                    status: TxStatus::Success,
                    aux: BTreeMap::new(),
                }));
            }
        }
        ingest_transactions(txs, Chain::Generic).0
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::graph;
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let g = graph(&[("c", "a", 2.0, 1), ("a", "b", 3.0, 2), ("b", "c", 1.0, 1)]);
        let cfg = SamplingConfig::default();
        let subs = build_subgraphs(&g, &[g.node("c").unwrap(), g.node("a").unwrap()], &cfg).unwrap();
        let text = write_subgraphs_jsonl(&subs, &g).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"center\":\"c\""));
        let back = read_subgraphs_jsonl(&text, &g).unwrap();
        assert_eq!(back, subs);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = graph(&[("c", "a", 2.0, 1), ("a", "c", 3.0, 1), ("a", "b", 1.0, 1), ("b", "b", 1.0, 1)]);
        let sub = sample_khop(&g, g.node("c").unwrap(), &SamplingConfig::default()).unwrap();
        let a = sub.adjacency();
        assert_eq!(a, a.t());
        assert_eq!(a.sum(), 4.0);
        assert!((0..3).all(|i| a[[i, i]] == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SamplingConfig { per_hop: 0, ..SamplingConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SamplingConfig { beta: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
