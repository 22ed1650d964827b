use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::graph::GraphBuilder;
use super::{Amount, Chain, RawTransaction, TransactionGraph, TxStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl InputFormat {
    /// Guesses from a file extension; anything that is not `.csv` is treated as JSON lines.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::JsonLines,
        }
    }
}

/// Why a single input row was rejected. Rejections are counted, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Unparseable,
    MissingField(&'static str),
    BadAmount(&'static str),
    BadTimestamp,
    BadStatus,
    BadAux(&'static str),
    EmptyAccount,
}

impl RejectReason {
    pub fn key(&self) -> String {
        match self {
            RejectReason::Unparseable => "unparseable".into(),
            RejectReason::MissingField(f) => format!("missing_{f}"),
            RejectReason::BadAmount(f) => format!("bad_amount_{f}"),
            RejectReason::BadTimestamp => "bad_timestamp".into(),
            RejectReason::BadStatus => "bad_status".into(),
            RejectReason::BadAux(f) => format!("bad_aux_{f}"),
            RejectReason::EmptyAccount => "empty_account".into(),
        }
    }
}

/// Counts collected while building a graph from a record stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: u64,
    pub retained: u64,
    pub dropped_zero_amount: u64,
    pub dropped_failed: u64,
    pub rejected: BTreeMap<String, u64>,
}

impl IngestReport {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    fn reject(&mut self, reason: &RejectReason) {
        *self.rejected.entry(reason.key()).or_default() += 1;
    }
}

struct Columns {
    amount: &'static str,
    fee: &'static str,
    amount_is_base_units: bool,
    aux: &'static [&'static str],
}

fn columns(chain: Chain) -> Columns {
    match chain {
        Chain::Ethereum => Columns {
            amount: "value_wei",
            fee: "gas_fee",
            amount_is_base_units: true,
            aux: &[],
        },
        Chain::Bitcoin => Columns {
            amount: "value_sat",
            fee: "fee_sat",
            amount_is_base_units: true,
            aux: &["input_count", "output_count"],
        },
        Chain::Generic => Columns {
            amount: "amount",
            fee: "fee",
            amount_is_base_units: false,
            aux: &[],
        },
    }
}

fn parse_status(s: &str) -> Option<TxStatus> {
    match s.trim().to_ascii_lowercase().as_str() {
        "success" | "ok" | "1" | "true" => Some(TxStatus::Success),
        "failed" | "fail" | "error" | "0" | "false" => Some(TxStatus::Failed),
        _ => None,
    }
}

/// Converts one flat string row into a transaction for the given chain schema.
pub(crate) fn parse_row(
    row: &HashMap<String, String>,
    chain: Chain,
) -> std::result::Result<RawTransaction, RejectReason> {
    let cols = columns(chain);
    let field = |name: &'static str| -> std::result::Result<&str, RejectReason> {
        row.get(name)
            .map(|s| s.as_str())
            .ok_or(RejectReason::MissingField(name))
    };
    let parse_amount = |s: &str| {
        if cols.amount_is_base_units {
            Amount::parse_base_units(s)
        } else {
            Amount::parse_decimal(s, chain.decimals())
        }
    };

    let tx_id = field("tx_id")?.trim().to_string();
    let from = field("from")?.trim().to_string();
    let to = field("to")?.trim().to_string();
    let amount = parse_amount(field(cols.amount)?).ok_or(RejectReason::BadAmount(cols.amount))?;
    let timestamp: u64 = field("timestamp")?
        .trim()
        .parse()
        .map_err(|_| RejectReason::BadTimestamp)?;
    let fee = match row.get(cols.fee).map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => Some(parse_amount(s).ok_or(RejectReason::BadAmount(cols.fee))?),
    };
    let status = parse_status(field("status")?).ok_or(RejectReason::BadStatus)?;
    let mut aux = BTreeMap::new();
    for &name in cols.aux {
        if let Some(v) = row.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            aux.insert(
                name.to_string(),
                v.parse().map_err(|_| RejectReason::BadAux(name))?,
            );
        }
    }
    let tx = RawTransaction {
        chain,
        tx_id,
        from,
        to,
        amount,
        timestamp,
        fee,
        status,
        aux,
    };
    tx.validate()?;
    Ok(tx)
}

fn json_row(line: &str) -> Option<HashMap<String, String>> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let mut row = HashMap::with_capacity(obj.len());
    for (k, v) in obj {
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Null => continue,
            _ => return None,
        };
        row.insert(k.clone(), s);
    }
    Some(row)
}

/// Builds a graph from already-parsed records (or per-record parse failures).
pub fn ingest_transactions<I>(records: I, chain: Chain) -> (TransactionGraph, IngestReport)
where
    I: IntoIterator<Item = std::result::Result<RawTransaction, RejectReason>>,
{
    let mut builder = GraphBuilder::new(chain);
    let mut report = IngestReport::default();
    for record in records {
        report.rows += 1;
        match record.and_then(|tx| tx.validate().map(|_| tx)) {
            Err(reason) => report.reject(&reason),
            Ok(tx) if tx.chain != chain => report.reject(&RejectReason::Unparseable),
            Ok(tx) if tx.status == TxStatus::Failed => report.dropped_failed += 1,
            Ok(tx) if tx.amount.is_zero() => report.dropped_zero_amount += 1,
            Ok(tx) => {
                if builder.add(&tx) {
                    report.retained += 1;
                } else {
                    report.reject(&RejectReason::BadAmount("overflow"));
                }
            }
        }
    }
    (builder.finish(), report)
}

/// Reads a CSV or JSON-lines export using the chain's column set.
pub fn ingest_reader<R: Read>(
    reader: R,
    format: InputFormat,
    chain: Chain,
) -> Result<(TransactionGraph, IngestReport)> {
    let records: Vec<std::result::Result<RawTransaction, RejectReason>> = match format {
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers = rdr.headers().map_err(Error::from)?.clone();
            rdr.records()
                .map(|rec| match rec {
                    Ok(rec) => {
                        let row: HashMap<String, String> = headers
                            .iter()
                            .zip(rec.iter())
                            .map(|(h, v)| (h.to_string(), v.to_string()))
                            .collect();
                        parse_row(&row, chain)
                    }
                    Err(_) => Err(RejectReason::Unparseable),
                })
                .collect()
        }
        InputFormat::JsonLines => {
            let mut out = Vec::new();
            for line in BufReader::new(reader).lines() {
                let line = line.map_err(|e| Error::io("<input>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(match json_row(&line) {
                    Some(row) => parse_row(&row, chain),
                    None => Err(RejectReason::Unparseable),
                });
            }
            out
        }
    };
    Ok(ingest_transactions(records, chain))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(from: &str, to: &str, amount: u128, status: TxStatus) -> RawTransaction {
        RawTransaction {
            chain: Chain::Generic,
            tx_id: format!("{from}-{to}-{amount}"),
            from: from.into(),
            to: to.into(),
            amount: Amount(amount),
            timestamp: 100,
            fee: None,
            status,
            aux: BTreeMap::new(),
        }
    }

    #[test]
    fn parallel_transfers_merge() {
        let one = 100_000_000;
        let mut a = tx("A", "B", one, TxStatus::Success);
        let mut b = tx("A", "B", 2 * one, TxStatus::Success);
        a.timestamp = 10;
        b.timestamp = 30;
        let (g, report) = ingest_transactions(vec![Ok(a), Ok(b)], Chain::Generic);
        assert_eq!(report.retained, 2);
        assert_eq!(g.edge_count(), 1);
        let e = &g.edges()[0];
        assert_eq!(e.cum_amount, Amount(3 * one));
        assert_eq!(e.cum_amount.to_native(8), 3.0);
        assert_eq!(e.tx_count, 2);
        assert_eq!((e.first_ts, e.last_ts), (10, 30));
    }

    #[test]
    fn zero_and_failed_are_filtered() {
        let (g, r) = ingest_transactions(vec![Ok(tx("A", "B", 0, TxStatus::Success))], Chain::Generic);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(r.dropped_zero_amount, 1);
        let (g, r) = ingest_transactions(vec![Ok(tx("A", "B", 5, TxStatus::Failed))], Chain::Generic);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(r.dropped_failed, 1);
    }

    #[test]
    fn self_transfers_are_kept() {
        let (g, _) = ingest_transactions(vec![Ok(tx("A", "A", 5, TxStatus::Success))], Chain::Generic);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_count(), 1);
    }

    #[test]
    fn malformed_rows_are_counted_not_fatal() {
        let csv = "tx_id,from,to,value_wei,timestamp,gas_fee,status\n\
                   t1,0xa,0xb,1000,5,21,success\n\
                   t2,0xa,,1000,5,21,success\n\
                   t3,0xa,0xb,-4,5,21,success\n\
                   t4,0xa,0xb,10,yesterday,21,success\n\
                   t5,0xa,0xb,10,6,21,maybe\n\
                   t6,0xb,0xa,7,9,,failed\n";
        let (g, r) = ingest_reader(csv.as_bytes(), InputFormat::Csv, Chain::Ethereum).unwrap();
        assert_eq!(r.rows, 6);
        assert_eq!(r.retained, 1);
        assert_eq!(r.dropped_failed, 1);
        assert_eq!(r.rejected_total(), 4);
        assert_eq!(r.rejected["empty_account"], 1);
        assert_eq!(r.rejected["bad_amount_value_wei"], 1);
        assert_eq!(r.rejected["bad_timestamp"], 1);
        assert_eq!(r.rejected["bad_status"], 1);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].aux_sums["fee"], Amount(21));
    }

    #[test]
    fn bitcoin_jsonl_carries_aux_fields() {
        let lines = r#"{"tx_id":"a","from":"1A","to":"1B","value_sat":500,"timestamp":1,"input_count":2,"output_count":3,"fee_sat":10,"status":"success"}
{"tx_id":"b","from":"1A","to":"1B","value_sat":"700","timestamp":4,"input_count":1,"output_count":1,"fee_sat":5,"status":"success"}
not json
"#;
        let (g, r) = ingest_reader(lines.as_bytes(), InputFormat::JsonLines, Chain::Bitcoin).unwrap();
        assert_eq!(r.rejected["unparseable"], 1);
        let e = &g.edges()[0];
        assert_eq!(e.cum_amount, Amount(1200));
        assert_eq!(e.aux_sums["input_count"], Amount(3));
        assert_eq!(e.aux_sums["output_count"], Amount(4));
        assert_eq!(e.aux_sums["fee"], Amount(15));
    }
}
