use std::fmt::Write as _;

use regex::Regex;

use super::dossier::AccountDossier;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE_VERSION: &str = "forensic-v1";
pub const DEFAULT_ROW_BUDGET: usize = 100;

/// The four analysis dimensions, in prompt order.
pub const DIMENSIONS: [&str; 4] = ["Value flow", "Counterparties", "Transaction timing", "Gas expenditure"];

pub const NO_LOOKUP_INSTRUCTION: &str = "Use only the records below. Do not look up any account, address, \
transaction or label in block explorers, databases or other external sources.";

/// Header line that opens the aggregate block; the mock backend parses the
/// `- key: value` lines that follow it.
pub const AGGREGATES_HEADER: &str = "Aggregates:";

/// Regular expressions matching raw account identifiers.
#[derive(Debug, Clone)]
pub struct RedactionAuditor {
    patterns: Vec<Regex>,
}

impl Default for RedactionAuditor {
    fn default() -> Self {
        RedactionAuditor::new(&[
            r"0x[0-9a-fA-F]{8,}",
            r"\bbc1[02-9ac-hj-np-z]{11,71}\b",
            r"\b[13][a-km-zA-HJ-NP-Z1-9]{25,34}\b",
        ])
        .expect("built-in patterns compile")
    }
}

impl RedactionAuditor {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p.as_ref()).map_err(|e| Error::Config(format!("redaction pattern: {e}"))))
            .collect::<Result<_>>()?;
        Ok(RedactionAuditor { patterns })
    }

    /// First identifier-like match in `text`, if any.
    pub fn find<'t>(&self, text: &'t str) -> Option<&'t str> {
        self.patterns.iter().find_map(|p| p.find(text)).map(|m| m.as_str())
    }

    pub fn check(&self, context: &str, text: &str) -> Result<()> {
        match self.find(text) {
            Some(m) => Err(Error::Redaction(format!("{context} contains account identifier {m:?}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptConfig {
    pub template_version: String,
    /// Maximum number of partner rows serialized into one prompt.
    pub row_budget: usize,
    pub auditor: RedactionAuditor,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            template_version: DEFAULT_TEMPLATE_VERSION.to_string(),
            row_budget: DEFAULT_ROW_BUDGET,
            auditor: RedactionAuditor::default(),
        }
    }
}

pub(crate) fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Chain-of-thought prompt for the forensic summary of one account.
///
/// Rows beyond the budget are dropped in descending order of amount and the
/// prompt says how many were omitted.
pub fn build_forensic_prompt(dossier: &AccountDossier, cfg: &PromptConfig) -> Result<String> {
    for s in dossier.strings() {
        cfg.auditor.check("dossier", s)?;
    }
    let a = &dossier.aggregates;
    let mut p = String::new();
    let _ = writeln!(p, "[template {}]", cfg.template_version);
    p.push_str(
        "You are a blockchain forensic analyst. Summarize the transaction behaviour of the account \
         labelled ACCOUNT. Reason step by step through each dimension below, then state your findings \
         as short declarative sentences.\n",
    );
    p.push_str(NO_LOOKUP_INSTRUCTION);
    p.push('\n');
    let guidance = [
        "How much value enters and leaves the account, and whether one direction dominates.",
        "How many counterparties there are, and whether funds converge from many senders or spread to many receivers.",
        "When activity starts and stops, how long it lasts, and whether it comes in bursts.",
        "How much is spent on fees relative to the value moved.",
    ];
    for (d, g) in DIMENSIONS.iter().zip(guidance) {
        let _ = writeln!(p, "## {d}\n{g}");
    }
    let _ = writeln!(p, "{AGGREGATES_HEADER}");
    let kv: [(&str, String); 13] = [
        ("unit", dossier.unit.clone()),
        ("total_in", fmt_num(dossier.native(a.total_in))),
        ("total_out", fmt_num(dossier.native(a.total_out))),
        ("tx_in", a.tx_in.to_string()),
        ("tx_out", a.tx_out.to_string()),
        ("unique_partners", a.unique_partners.to_string()),
        ("in_partners", a.in_partners.to_string()),
        ("out_partners", a.out_partners.to_string()),
        ("active_span_days", fmt_num(a.active_span_days)),
        ("fee_total", fmt_num(dossier.native(a.fee_total))),
        ("burst_partners", a.burst_partners.to_string()),
        ("max_partner_tx", a.max_partner_tx.to_string()),
        ("top_partner", dossier.rows.first().map_or("none".into(), |r| r.partner.clone())),
    ];
    for (k, v) in kv {
        let _ = writeln!(p, "- {k}: {v}");
    }
    let _ = writeln!(
        p,
        "Partner rows (partner | direction | amount {} | tx_count | first seen, days from start | last seen, days from start):",
        dossier.unit
    );
    let kept = dossier.rows.len().min(cfg.row_budget);
    let day = |t: u64| fmt_num((t - a.first_ts) as f64 / 86_400.0);
    for r in &dossier.rows[..kept] {
        let _ = writeln!(
            p,
            "{} | {} | {} | {} | {} | {}",
            r.partner,
            r.direction.as_str(),
            fmt_num(dossier.native(r.cum_amount)),
            r.tx_count,
            day(r.first_ts),
            day(r.last_ts)
        );
    }
    if kept < dossier.rows.len() {
        let _ = writeln!(
            p,
            "Note: {} smaller partner rows were omitted to fit the row budget of {}.",
            dossier.rows.len() - kept,
            cfg.row_budget
        );
    }
    p.push_str("Summary:\n");
    cfg.auditor.check("prompt", &p)?;
    Ok(p)
}

/// Parses the `- key: value` aggregate block out of a forensic prompt.
pub(crate) fn parse_aggregates(prompt: &str) -> Option<std::collections::BTreeMap<String, String>> {
    let start = prompt.find(AGGREGATES_HEADER)? + AGGREGATES_HEADER.len();
    let map = prompt[start..]
        .lines()
        .skip_while(|l| l.trim().is_empty())
        .map_while(|l| l.strip_prefix("- "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Some(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Amount;
    use crate::summary::dossier::{Aggregates, Direction, PartnerRow};

    fn dossier(rows: usize) -> AccountDossier {
        AccountDossier {
            center: "ACCOUNT".into(),
            unit: "ETH".into(),
            decimals: 0,
            rows: (0..rows)
                .map(|i| PartnerRow {
                    partner: format!("CP{:04}", i + 1),
                    direction: if i % 2 == 0 { Direction::In } else { Direction::Out },
                    cum_amount: Amount(((i * 7919) % 1000 + 1) as u128),
                    tx_count: 1,
                    first_ts: 0,
                    last_ts: 0,
                })
                .collect(),
            aggregates: Aggregates {
                total_in: Amount(0),
                total_out: Amount(0),
                tx_in: 0,
                tx_out: 0,
                unique_partners: rows,
                in_partners: 0,
                out_partners: 0,
                first_ts: 0,
                last_ts: 0,
                active_span_days: 0.0,
                fee_total: Amount(0),
                burst_partners: 0,
                max_partner_tx: 1,
            },
        }
    }

    #[test]
    fn minimal_prompt_has_every_dimension() {
        let p = build_forensic_prompt(&dossier(1), &PromptConfig::default()).unwrap();
        for d in DIMENSIONS {
            assert!(p.contains(&format!("## {d}")), "{d}");
        }
        assert!(p.contains(NO_LOOKUP_INSTRUCTION));
        assert!(!p.contains("omitted"));
        assert_eq!(p, build_forensic_prompt(&dossier(1), &PromptConfig::default()).unwrap());
    }

    #[test]
    fn raw_address_is_rejected() {
        let mut d = dossier(2);
        d.rows[1].partner = "0x52908400098527886e0f7030069857d2e4169ee7".into();
        let err = build_forensic_prompt(&d, &PromptConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Redaction(_)));
    }

    #[test]
    fn truncation_keeps_largest_rows() {
        let mut d = dossier(500);
        // Dossier rows arrive sorted by descending amount.
        d.rows.sort_by(|a, b| b.cum_amount.cmp(&a.cum_amount).then_with(|| a.partner.cmp(&b.partner)));
        let cfg = PromptConfig { row_budget: 100, ..Default::default() };
        let p = build_forensic_prompt(&d, &cfg).unwrap();

        let mut oracle: Vec<(u128, String)> = d.rows.iter().map(|r| (r.cum_amount.0, r.partner.clone())).collect();
        oracle.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let want: std::collections::BTreeSet<String> = oracle[..100].iter().map(|x| x.1.clone()).collect();
        let got: std::collections::BTreeSet<String> = p
            .lines()
            .filter(|l| l.starts_with("CP"))
            .map(|l| l.split(" | ").next().unwrap().to_string())
            .collect();
        assert_eq!(got, want);
        assert!(p.contains("400 smaller partner rows were omitted"));
    }

    #[test]
    fn aggregate_block_parses_back() {
        let p = build_forensic_prompt(&dossier(3), &PromptConfig::default()).unwrap();
        let m = parse_aggregates(&p).unwrap();
        assert_eq!(m["unique_partners"], "3");
        assert_eq!(m["unit"], "ETH");
        assert_eq!(m.len(), 13);
    }

    #[test]
    fn auditor_patterns() {
        let a = RedactionAuditor::default();
        assert!(a.find("sent to 0xdeadbeef00").is_some());
        assert!(a.find("bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq").is_some());
        assert!(a.find("1BvBMSEYstWetqTFn5Au4m4GFg7xJaNVN2").is_some());
        assert!(a.find("CP001 sent 0.5 ETH over 12 days.").is_none());
    }
}
