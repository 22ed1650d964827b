use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Amount, NodeId, TransactionGraph};

/// Pseudonym used for the account under analysis.
pub const CENTER_PSEUDONYM: &str = "ACCOUNT";

/// Window after an account's first activity in which new counterparties count
/// towards the first-contact burst.
pub const BURST_WINDOW_SECS: u64 = 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerRow {
    pub partner: String,
    pub direction: Direction,
    pub cum_amount: Amount,
    pub tx_count: u64,
    pub first_ts: u64,
    pub last_ts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total_in: Amount,
    pub total_out: Amount,
    pub tx_in: u64,
    pub tx_out: u64,
    pub unique_partners: usize,
    pub in_partners: usize,
    pub out_partners: usize,
    pub first_ts: u64,
    pub last_ts: u64,
    pub active_span_days: f64,
    pub fee_total: Amount,
    /// Counterparties first contacted within [`BURST_WINDOW_SECS`] of the
    /// account's first activity.
    pub burst_partners: usize,
    pub max_partner_tx: u64,
}

/// Everything the summarizer may see about one account, with all account
/// identifiers replaced by pseudonyms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountDossier {
    pub center: String,
    pub unit: String,
    pub decimals: u32,
    pub rows: Vec<PartnerRow>,
    pub aggregates: Aggregates,
}

impl AccountDossier {
    /// Collects the account's direct transfers. Partners are numbered in
    /// descending order of total exchanged value, ties broken by account id, so
    /// the pseudonym mapping is a deterministic bijection.
    pub fn from_graph(graph: &TransactionGraph, account: NodeId) -> Result<Self> {
        if account.index() >= graph.node_count() {
            return Err(Error::NotFound(format!("node {}", account.0)));
        }
        let mut rows: Vec<(NodeId, Direction, &crate::ingest::EdgeRecord)> = Vec::new();
        let mut fee_total: u128 = 0;
        for e in graph.out_edges(account) {
            if e.dst != account {
                rows.push((e.dst, Direction::Out, e));
            }
            fee_total += e.aux_sums.get("fee").map_or(0, |a| a.0);
        }
        for e in graph.in_edges(account) {
            if e.src != account {
                rows.push((e.src, Direction::In, e));
            }
        }

        let mut totals: BTreeMap<NodeId, u128> = BTreeMap::new();
        for (p, _, e) in &rows {
            *totals.entry(*p).or_default() += e.cum_amount.0;
        }
        let mut order: Vec<NodeId> = totals.keys().copied().collect();
        order.sort_by(|a, b| totals[b].cmp(&totals[a]).then_with(|| graph.id(*a).cmp(graph.id(*b))));
        let width = order.len().to_string().len().max(3);
        let names: BTreeMap<NodeId, String> = order
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, format!("CP{:0width$}", i + 1)))
            .collect();

        let mut agg = Aggregates {
            total_in: Amount::ZERO,
            total_out: Amount::ZERO,
            tx_in: 0,
            tx_out: 0,
            unique_partners: order.len(),
            in_partners: 0,
            out_partners: 0,
            first_ts: rows.iter().map(|r| r.2.first_ts).min().unwrap_or(0),
            last_ts: rows.iter().map(|r| r.2.last_ts).max().unwrap_or(0),
            active_span_days: 0.0,
            fee_total: Amount(fee_total),
            burst_partners: 0,
            max_partner_tx: 0,
        };
        agg.active_span_days = (agg.last_ts - agg.first_ts) as f64 / 86_400.0;
        let mut first_contact: BTreeMap<NodeId, u64> = BTreeMap::new();
        for (p, dir, e) in &rows {
            match dir {
                Direction::In => {
                    agg.total_in.0 += e.cum_amount.0;
                    agg.tx_in += e.tx_count;
                    agg.in_partners += 1;
                }
                Direction::Out => {
                    agg.total_out.0 += e.cum_amount.0;
                    agg.tx_out += e.tx_count;
                    agg.out_partners += 1;
                }
            }
            agg.max_partner_tx = agg.max_partner_tx.max(e.tx_count);
            let fc = first_contact.entry(*p).or_insert(e.first_ts);
            *fc = (*fc).min(e.first_ts);
        }
        agg.burst_partners = first_contact
            .values()
            .filter(|&&t| t - agg.first_ts <= BURST_WINDOW_SECS)
            .count();

        let mut out_rows: Vec<PartnerRow> = rows
            .iter()
            .map(|(p, dir, e)| PartnerRow {
                partner: names[p].clone(),
                direction: *dir,
                cum_amount: e.cum_amount,
                tx_count: e.tx_count,
                first_ts: e.first_ts,
                last_ts: e.last_ts,
            })
            .collect();
        out_rows.sort_by(|a, b| {
            b.cum_amount
                .cmp(&a.cum_amount)
                .then_with(|| a.partner.cmp(&b.partner))
                .then_with(|| a.direction.as_str().cmp(b.direction.as_str()))
        });
        Ok(AccountDossier {
            center: CENTER_PSEUDONYM.to_string(),
            unit: graph.chain().unit().to_string(),
            decimals: graph.chain().decimals(),
            rows: out_rows,
            aggregates: agg,
        })
    }

    pub fn native(&self, amount: Amount) -> f64 {
        amount.to_native(self.decimals)
    }

    /// Every free-text field, for redaction checks.
    pub fn strings(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.center.as_str())
            .chain(std::iter::once(self.unit.as_str()))
            .chain(self.rows.iter().map(|r| r.partner.as_str()))
    }
}
