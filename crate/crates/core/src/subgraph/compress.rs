use super::{bfs, NodeRank, SamplingConfig, Subgraph};
use crate::error::{Error, Result};
use crate::ingest::NodeId;

/// Importance of a neighbour from its in-subgraph flows, degrees and depth:
/// `[ln(a_in + a_out + 1) + beta * ln(d_in + d_out + 1)] / (hop + 1)`.
pub fn importance_score(a_in: f64, a_out: f64, d_in: u64, d_out: u64, beta: f64, hop: u32) -> f64 {
    let behaviour = (a_in + a_out + 1.0).ln();
    let structure = ((d_in + d_out) as f64 + 1.0).ln();
    (behaviour + beta * structure) / (hop as f64 + 1.0)
}

struct Flows {
    a_in: f64,
    a_out: f64,
    d_in: u64,
    d_out: u64,
}

fn flows(sub: &Subgraph, u: NodeId) -> Flows {
    let decimals = sub.chain.decimals();
    let mut f = Flows {
        a_in: 0.0,
        a_out: 0.0,
        d_in: 0,
        d_out: 0,
    };
    for e in &sub.edges {
        if e.dst == u {
            f.a_in += e.cum_amount.to_native(decimals);
            f.d_in += 1;
        }
        if e.src == u {
            f.a_out += e.cum_amount.to_native(decimals);
            f.d_out += 1;
        }
    }
    f
}

/// Structural importance of neighbour `u` within `sub` (amounts in native units).
pub fn structural_importance(sub: &Subgraph, u: NodeId, beta: f64) -> Result<f64> {
    if u == sub.center {
        return Err(Error::Domain(
            "structural importance is defined for neighbours, not the centre".into(),
        ));
    }
    let idx = sub
        .position(u)
        .ok_or_else(|| Error::NotFound(format!("node {} not in subgraph", u.0)))?;
    let f = flows(sub, u);
    Ok(importance_score(f.a_in, f.a_out, f.d_in, f.d_out, beta, sub.hop[idx]))
}

fn rank_nodes(sub: &Subgraph, beta: f64) -> Vec<NodeRank> {
    sub.nodes
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            if i == 0 {
                return NodeRank { importance: 0.0, flow: 0.0 };
            }
            let f = flows(sub, u);
            NodeRank {
                importance: importance_score(f.a_in, f.a_out, f.d_in, f.d_out, beta, sub.hop[i]),
                flow: f.a_in + f.a_out,
            }
        })
        .collect()
}

/// Structural-importance compression.
///
/// Subgraphs with at most `budget` neighbours are returned unchanged. Otherwise
/// the `budget` neighbours with the highest importance are kept (ties: larger
/// flow, then smaller node id), together with every node on the BFS
/// shortest path from the centre to each kept neighbour; edges are re-induced.
///
/// Scores are computed once, on the first compression, and stored in
/// [`Subgraph::ranks`]; compressing the result again ranks with the stored
/// scores and therefore returns it unchanged.
pub fn compress_sigc(sub: &Subgraph, cfg: &SamplingConfig) -> Subgraph {
    if sub.len() <= cfg.budget + 1 {
        return sub.clone();
    }
    let ranks = sub.ranks.clone().unwrap_or_else(|| rank_nodes(sub, cfg.beta));
    let adj = sub.undirected_neighbors();
    let (dist, parent) = bfs(&adj, 0);

    let mut order: Vec<usize> = (1..sub.len()).filter(|&i| dist[i] != u32::MAX).collect();
    order.sort_by(|&a, &b| {
        ranks[b]
            .importance
            .total_cmp(&ranks[a].importance)
            .then(ranks[b].flow.total_cmp(&ranks[a].flow))
            .then(sub.nodes[a].cmp(&sub.nodes[b]))
    });

    let mut keep = vec![false; sub.len()];
    keep[0] = true;
    for &r in order.iter().take(cfg.budget) {
        let mut cur = r;
        while cur != usize::MAX && !keep[cur] {
            keep[cur] = true;
            cur = parent[cur];
        }
    }

    let nodes: Vec<NodeId> = sub.nodes.iter().zip(&keep).filter(|(_, &k)| k).map(|(&n, _)| n).collect();
    let kept_ranks: Vec<NodeRank> = ranks.iter().zip(&keep).filter(|(_, &k)| k).map(|(&r, _)| r).collect();
    let edges = sub
        .edges
        .iter()
        .filter(|e| nodes.contains(&e.src) && nodes.contains(&e.dst))
        .cloned()
        .collect();
    let mut out = Subgraph {
        chain: sub.chain,
        center: sub.center,
        nodes,
        hop: Vec::new(),
        edges,
        ranks: Some(kept_ranks),
    };
    out.hop = out.bfs_hops();
    out
}
