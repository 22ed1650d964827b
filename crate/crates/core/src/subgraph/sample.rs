use std::cmp::Ordering;
use std::collections::HashSet;

use super::{SamplingConfig, Subgraph};
use crate::error::{Error, Result};
use crate::ingest::{NodeId, TransactionGraph};

/// Interaction between a frontier node and one candidate, both directions summed.
#[derive(Debug, Clone, Copy)]
struct Interaction {
    node: NodeId,
    total: u128,
    count: u64,
}

impl Interaction {
    fn between(graph: &TransactionGraph, v: NodeId, u: NodeId) -> Self {
        let mut total = 0u128;
        let mut count = 0u64;
        for e in [graph.edge(v, u), graph.edge(u, v)].into_iter().flatten() {
            total = total.saturating_add(e.cum_amount.0);
            count += e.tx_count;
        }
        Interaction { node: u, total, count }
    }

    /// Compares average transfer value exactly via cross-multiplication.
    fn cmp_average(&self, other: &Self) -> Ordering {
        match (
            self.total.checked_mul(other.count as u128),
            other.total.checked_mul(self.count as u128),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => {
                let a = self.total as f64 / self.count as f64;
                let b = other.total as f64 / other.count as f64;
                a.partial_cmp(&b).unwrap_or(Ordering::Equal)
            }
        }
    }
}

/// Value-guided h-hop sampling around `center`.
///
/// At each hop every frontier node contributes its top `per_hop` not yet
/// selected neighbours, ranked by average transfer value (both directions),
/// then by total value, then by account id. The returned subgraph carries the
/// full induced edge set among the selected nodes.
pub fn sample_khop(graph: &TransactionGraph, center: NodeId, cfg: &SamplingConfig) -> Result<Subgraph> {
    if center.index() >= graph.node_count() {
        return Err(Error::NotFound(format!("centre node {} not in graph", center.0)));
    }
    let mut selected = vec![center];
    let mut seen: HashSet<NodeId> = HashSet::from([center]);
    let mut frontier = vec![center];
    for _ in 0..cfg.hops {
        let mut next = Vec::new();
        for &v in &frontier {
            let mut candidates: Vec<Interaction> = graph
                .neighbors(v)
                .into_iter()
                .filter(|u| !seen.contains(u))
                .map(|u| Interaction::between(graph, v, u))
                .collect();
            candidates.sort_by(|a, b| {
                b.cmp_average(a)
                    .then(b.total.cmp(&a.total))
                    .then_with(|| graph.id(a.node).cmp(graph.id(b.node)))
            });
            for c in candidates.into_iter().take(cfg.per_hop) {
                seen.insert(c.node);
                selected.push(c.node);
                next.push(c.node);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(Subgraph::induced(graph, selected))
}
