use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scored accounts with their true labels (1 = fraud).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub rows: Vec<ScoreRow>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub account: String,
    pub label: u8,
    pub probability: f64,
}

impl ScoreSet {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let s = ScoreSet { rows, threshold: 0.5 };
        s.validate()?;
        Ok(s)
    }

    pub fn from_pairs(labels: &[f64], scores: &[f64]) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::shape("scores", labels.len(), scores.len()));
        }
        Self::new(
            labels
                .iter()
                .zip(scores)
                .enumerate()
                .map(|(i, (&l, &p))| ScoreRow { account: i.to_string(), label: u8::from(l >= 0.5), probability: p })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        for r in &self.rows {
            if r.label > 1 {
                return Err(Error::Data(format!("label {} for {} is not 0 or 1", r.label, r.account)));
            }
            if !(0.0..=1.0).contains(&r.probability) {
                return Err(Error::Data(format!("probability {} for {} outside [0, 1]", r.probability, r.account)));
            }
        }
        Ok(())
    }

    fn class_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let pos = self.rows.iter().filter(|r| r.label == 1).map(|r| r.probability).collect();
        let neg = self.rows.iter().filter(|r| r.label == 0).map(|r| r.probability).collect();
        (pos, neg)
    }

    /// Reads a CSV with columns `account,label,probability`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
        Self::new(rows)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// Metrics with fraud as the positive class. Fields that are undefined for the
/// input (no predicted positives, a single class, ...) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub positives: usize,
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub ks: Option<f64>,
    pub accuracy: f64,
    pub confusion: Confusion,
    /// Ten equal-width bins over `[0, 1]`.
    pub histogram_fraud: Vec<u64>,
    pub histogram_benign: Vec<u64>,
}

impl EvalReport {
    /// `(metric, value)` rows; undefined metrics are written as `NA`.
    pub fn rows(&self) -> Vec<(String, String)> {
        let opt = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.12}"));
        let mut out = vec![
            ("n".to_string(), self.n.to_string()),
            ("positives".to_string(), self.positives.to_string()),
            ("threshold".to_string(), format!("{}", self.threshold)),
            ("precision".to_string(), opt(self.precision)),
            ("recall".to_string(), opt(self.recall)),
            ("f1".to_string(), opt(self.f1)),
            ("auc".to_string(), opt(self.auc)),
            ("ks".to_string(), opt(self.ks)),
            ("accuracy".to_string(), format!("{:.12}", self.accuracy)),
            ("tp".to_string(), self.confusion.tp.to_string()),
            ("fp".to_string(), self.confusion.fp.to_string()),
            ("tn".to_string(), self.confusion.tn.to_string()),
            ("fn".to_string(), self.confusion.fn_.to_string()),
        ];
        for (i, c) in self.histogram_fraud.iter().enumerate() {
            out.push((format!("hist_fraud_{i}"), c.to_string()));
        }
        for (i, c) in self.histogram_benign.iter().enumerate() {
            out.push((format!("hist_benign_{i}"), c.to_string()));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (k, v) in self.rows() {
            w.write_record([k, v])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Area under the ROC curve from the Mann–Whitney rank statistic, ties
/// counted as one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // Sum of midranks of the positives, doubled to stay in integers.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank2 = (i + 1 + j) as u128;
        rank_sum2 += midrank2 * all[i..j].iter().filter(|x| x.1).count() as u128;
        i = j;
    }
    let (np, nn) = (pos.len() as u128, neg.len() as u128);
    // U = R - np(np+1)/2, doubled.
    let u2 = rank_sum2 - np * (np + 1);
    Some(u2 as f64 / (2 * np * nn) as f64)
}

/// Largest gap between the two empirical score CDFs over every distinct score.
pub fn ks(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut p = pos.to_vec();
    let mut n = neg.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    n.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < p.len() || j < n.len() {
        let x = match (p.get(i), n.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < p.len() && p[i] <= x {
            i += 1;
        }
        while j < n.len() && n[j] <= x {
            j += 1;
        }
        let gap = (i as f64 / p.len() as f64 - j as f64 / n.len() as f64).abs();
        best = best.max(gap);
    }
    Some(best)
}

fn histogram(scores: &[f64]) -> Vec<u64> {
    let mut h = vec![0u64; 10];
    for &s in scores {
        h[((s * 10.0).floor() as usize).min(9)] += 1;
    }
    h
}

pub fn compute_metrics(scores: &ScoreSet) -> Result<EvalReport> {
    scores.validate()?;
    if scores.rows.is_empty() {
        return Err(Error::Precondition("score set is empty".into()));
    }
    let mut c = Confusion::default();
    for r in &scores.rows {
        let predicted = r.probability >= scores.threshold;
        match (r.label == 1, predicted) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { None } else { Some(a as f64 / b as f64) };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let (pos, neg) = scores.class_scores();
    Ok(EvalReport {
        n: scores.rows.len(),
        positives: pos.len(),
        threshold: scores.threshold,
        precision,
        recall,
        f1,
        auc: auc(&pos, &neg),
        ks: ks(&pos, &neg),
        accuracy: (c.tp + c.tn) as f64 / scores.rows.len() as f64,
        confusion: c,
        histogram_fraud: histogram(&pos),
        histogram_benign: histogram(&neg),
    })
}
