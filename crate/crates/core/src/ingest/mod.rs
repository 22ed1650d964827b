//! Transaction ingestion: per-chain record parsing, edge aggregation, labels and
//! dataset splits.
//!
//! Amounts are carried as integer base units (wei, satoshi) so aggregation sums
//! are exact. Zero-amount and failed transfers are dropped; repeated transfers
//! between the same ordered pair collapse into a single [`EdgeRecord`].

mod graph;
mod labels;
mod parse;
mod split;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{EdgeRecord, TransactionGraph, GRAPH_FORMAT, GRAPH_FORMAT_VERSION};
pub use labels::{read_labels_csv, LabelReport};
pub use parse::{ingest_reader, ingest_transactions, IngestReport, InputFormat, RejectReason};
pub use split::{split_dataset, DatasetSplits, SplitRatios};

/// Dense node handle into a [`TransactionGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Non-negative amount in the chain's smallest unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(pub u128);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Amount) -> Option<Amount> {
        self.0.checked_add(other.0).map(Amount)
    }

    /// Value in native units (ETH, BTC, ...) as a float.
    pub fn to_native(self, decimals: u32) -> f64 {
        self.0 as f64 / 10f64.powi(decimals as i32)
    }

    /// Parses a plain decimal string ("12", "0.5") given in native units.
    pub fn parse_decimal(s: &str, decimals: u32) -> Option<Amount> {
        let s = s.trim();
        if s.is_empty() {
            return None;
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        // Digits beyond the chain precision must be zero; anything else would be lossy.
        let (kept, dropped) = frac_part.split_at(frac_part.len().min(decimals as usize));
        if dropped.bytes().any(|b| b != b'0') {
            return None;
        }
        let scale = 10u128.checked_pow(decimals)?;
        let whole: u128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().ok()?
        };
        let mut frac: u128 = if kept.is_empty() { 0 } else { kept.parse().ok()? };
        frac = frac.checked_mul(10u128.checked_pow(decimals - kept.len() as u32)?)?;
        whole.checked_mul(scale)?.checked_add(frac).map(Amount)
    }

    /// Parses an integer count of base units ("1000000000000000000").
    pub fn parse_base_units(s: &str) -> Option<Amount> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        s.parse().ok().map(Amount)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Amount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Amount::parse_base_units(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid amount {s:?}")))
    }
}

/// Chain schema tag selecting the column set of an export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    Ethereum,
    Bitcoin,
    Generic,
}

impl Chain {
    /// Decimal places between the native unit and the base unit.
    pub fn decimals(self) -> u32 {
        match self {
            Chain::Ethereum => 18,
            Chain::Bitcoin => 8,
            Chain::Generic => 8,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Chain::Ethereum => "ETH",
            Chain::Bitcoin => "BTC",
            Chain::Generic => "units",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Chain::Ethereum => "ethereum",
            Chain::Bitcoin => "bitcoin",
            Chain::Generic => "generic",
        }
    }
}

impl FromStr for Chain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ethereum" | "eth" => Ok(Chain::Ethereum),
            "bitcoin" | "btc" => Ok(Chain::Bitcoin),
            "generic" => Ok(Chain::Generic),
            other => Err(Error::Config(format!("unknown chain schema tag {other:?}"))),
        }
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxStatus {
    Success,
    Failed,
}

/// Ground-truth account label. Fraud is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Benign,
    Fraud,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Fraud => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_u8() as f64
    }

    pub fn is_fraud(self) -> bool {
        self == Label::Fraud
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Fraud),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// One transfer as read from an export, before filtering and aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTransaction {
    pub chain: Chain,
    pub tx_id: String,
    pub from: String,
    pub to: String,
    pub amount: Amount,
    pub timestamp: u64,
    pub fee: Option<Amount>,
    pub status: TxStatus,
    /// Chain-specific numeric columns, e.g. Bitcoin input/output counts.
    #[serde(default)]
    pub aux: BTreeMap<String, u64>,
}

impl RawTransaction {
    pub fn validate(&self) -> std::result::Result<(), RejectReason> {
        if self.from.trim().is_empty() || self.to.trim().is_empty() {
            return Err(RejectReason::EmptyAccount);
        }
        Ok(())
    }

    pub fn is_retained(&self) -> bool {
        self.status == TxStatus::Success && !self.amount.is_zero()
    }
}
