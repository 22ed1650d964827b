use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ingest_transactions, Amount, Chain, IngestReport, Label, RawTransaction, TransactionGraph, TxStatus};

const DAY: u64 = 86_400;
const HOUR: u64 = 3_600;
const START_TS: u64 = 1_600_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motif {
    FanIn,
    FanOut,
    Relay,
    Burst,
}

/// Relative frequency of each fraud motif.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifMix {
    pub fan_in: f64,
    pub fan_out: f64,
    pub relay: f64,
    pub burst: f64,
}

impl Default for MotifMix {
    fn default() -> Self {
        MotifMix { fan_in: 1.0, fan_out: 1.0, relay: 1.0, burst: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_accounts: usize,
    pub fraud_ratio: f64,
    pub motif_mix: MotifMix,
    /// Minimum number of distinct senders (fan-in) or receivers (fan-out).
    pub fan_width: usize,
    pub benign_partners_min: usize,
    pub benign_partners_max: usize,
    /// Log-normal parameters of benign transfer sizes, in ETH.
    pub benign_amount_mu: f64,
    pub benign_amount_sigma: f64,
    /// Log-normal parameters of the value moved through a fraud motif, in ETH.
    pub fraud_amount_mu: f64,
    pub fraud_amount_sigma: f64,
    /// Fraction of accounts acting as high-traffic benign hubs.
    pub hub_ratio: f64,
    pub span_days: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_accounts: 2000,
            fraud_ratio: 0.1,
            motif_mix: MotifMix::default(),
            fan_width: 8,
            benign_partners_min: 2,
            benign_partners_max: 6,
            benign_amount_mu: 0.5f64.ln(),
            benign_amount_sigma: 0.6,
            fraud_amount_mu: 20f64.ln(),
            fraud_amount_sigma: 0.8,
            hub_ratio: 0.01,
            span_days: 180,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn fraud_count(&self) -> usize {
        (self.n_accounts as f64 * self.fraud_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.fraud_ratio > 0.0 && self.fraud_ratio < 1.0) {
            return fail(format!("fraud_ratio must be in (0, 1), got {}", self.fraud_ratio));
        }
        let fraud = self.fraud_count();
        if fraud == 0 {
            return fail(format!(
                "fraud_ratio {} of {} accounts yields no fraud accounts",
                self.fraud_ratio, self.n_accounts
            ));
        }
        let hubs = (self.n_accounts as f64 * self.hub_ratio).round() as usize;
        if self.n_accounts < fraud + hubs + 4 * self.fan_width.max(self.benign_partners_max) {
            return fail(format!("{} accounts are too few for {fraud} fraud accounts and the motif widths", self.n_accounts));
        }
        if self.fan_width < 2 {
            return fail("fan_width must be at least 2".into());
        }
        if self.benign_partners_min == 0 || self.benign_partners_min > self.benign_partners_max {
            return fail("benign partner range must satisfy 1 <= min <= max".into());
        }
        let m = self.motif_mix;
        let w = [m.fan_in, m.fan_out, m.relay, m.burst];
        if w.iter().any(|x| x.is_nan() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return fail("motif weights must be non-negative with a positive sum".into());
        }
        if !(self.benign_amount_sigma > 0.0 && self.fraud_amount_sigma > 0.0) {
            return fail("amount sigmas must be positive".into());
        }
        if !(0.0..1.0).contains(&self.hub_ratio) || self.span_days < 30 {
            return fail("hub_ratio must be in [0, 1) and span_days at least 30".into());
        }
        Ok(())
    }
}

/// Generated transactions and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub transactions: Vec<RawTransaction>,
    pub labels: Vec<(String, Label)>,
    pub motifs: BTreeMap<String, Motif>,
}

impl SynthCorpus {
    /// Ingests the transactions and attaches every label.
    pub fn graph(&self) -> Result<(TransactionGraph, IngestReport)> {
        let (mut g, report) = ingest_transactions(self.transactions.iter().cloned().map(Ok), Chain::Ethereum);
        g.attach_labels(self.labels.iter().map(|(a, l)| (a.as_str(), *l)))?;
        Ok((g, report))
    }

    /// Ethereum-style export: `tx_id,from,to,value_wei,timestamp,gas_fee,status`.
    pub fn transactions_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["tx_id", "from", "to", "value_wei", "timestamp", "gas_fee", "status"])?;
        for t in &self.transactions {
            w.write_record([
                t.tx_id.clone(),
                t.from.clone(),
                t.to.clone(),
                t.amount.0.to_string(),
                t.timestamp.to_string(),
                t.fee.map_or(String::new(), |f| f.0.to_string()),
                "success".to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Data(e.to_string()))?).expect("utf-8"))
    }

    pub fn labels_csv(&self) -> String {
        let mut s = String::from("account,label\n");
        for (a, l) in &self.labels {
            s.push_str(&format!("{a},{}\n", l.as_u8()));
        }
        s
    }
}

struct Gen {
    rng: ChaCha8Rng,
    ids: Vec<String>,
    txs: Vec<RawTransaction>,
    benign_amount: LogNormal<f64>,
}

impl Gen {
    fn wei(x: f64) -> Amount {
        Amount(((x * 1e18).round() as u128).max(1))
    }

    fn push(&mut self, from: usize, to: usize, eth: f64, ts: u64) {
        let fee = self.rng.random_range(0.0005..0.002);
        let id = format!("tx{:07}", self.txs.len());
        self.txs.push(RawTransaction {
            chain: Chain::Ethereum,
            tx_id: id,
            from: self.ids[from].clone(),
            to: self.ids[to].clone(),
            amount: Self::wei(eth),
            timestamp: ts,
            fee: Some(Self::wei(fee)),
            status: TxStatus::Success,
            aux: BTreeMap::new(),
        });
    }

    fn distinct(&mut self, pool: &[usize], k: usize, exclude: usize) -> Vec<usize> {
        let mut out: Vec<usize> = pool.choose_multiple(&mut self.rng, k + 1).copied().filter(|&x| x != exclude).collect();
        out.truncate(k);
        out
    }
}

/// Generates a labelled corpus. Benign accounts exchange small, steady amounts
/// with a few random partners over the whole period; fraud accounts sit inside
/// short-lived motifs.
pub fn synthgen(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = BTreeSet::new();
    let mut ids = Vec::with_capacity(cfg.n_accounts);
    while ids.len() < cfg.n_accounts {
        let bytes: [u8; 20] = rng.random();
        let id = format!("0x{}", hex::encode(bytes));
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    let mut order: Vec<usize> = (0..cfg.n_accounts).collect();
    order.shuffle(&mut rng);
    let n_fraud = cfg.fraud_count();
    let n_hub = (cfg.n_accounts as f64 * cfg.hub_ratio).round() as usize;
    let fraud: Vec<usize> = order[..n_fraud].to_vec();
    let hubs: Vec<usize> = order[n_fraud..n_fraud + n_hub].to_vec();
    let regular: Vec<usize> = order[n_fraud + n_hub..].to_vec();
    let benign: Vec<usize> = order[n_fraud..].to_vec();

    let mut g = Gen {
        rng,
        ids,
        txs: Vec::new(),
        benign_amount: LogNormal::new(cfg.benign_amount_mu, cfg.benign_amount_sigma)
            .map_err(|e| Error::Config(format!("benign amount distribution: {e}")))?,
    };
    let fraud_amount = LogNormal::new(cfg.fraud_amount_mu, cfg.fraud_amount_sigma)
        .map_err(|e| Error::Config(format!("fraud amount distribution: {e}")))?;
    let span = cfg.span_days * DAY;

    for &a in &regular {
        let k = g.rng.random_range(cfg.benign_partners_min..=cfg.benign_partners_max);
        for _ in 0..k {
            let p = if !hubs.is_empty() && g.rng.random_bool(0.2) {
                *hubs.choose(&mut g.rng).expect("non-empty")
            } else {
                *regular.choose(&mut g.rng).expect("non-empty")
            };
            if p == a {
                continue;
            }
            let base = g.benign_amount.sample(&mut g.rng);
            let outgoing = g.rng.random_bool(0.5);
            for _ in 0..g.rng.random_range(1..=4) {
                let amt = base * g.rng.random_range(0.8..1.2);
                let ts = START_TS + g.rng.random_range(0..span);
                if outgoing {
                    g.push(a, p, amt, ts);
                } else {
                    g.push(p, a, amt, ts);
                }
            }
        }
    }

    let mix = cfg.motif_mix;
    let motif_pick = WeightedIndex::new([mix.fan_in, mix.fan_out, mix.relay, mix.burst])
        .map_err(|e| Error::Config(format!("motif weights: {e}")))?;
    let kinds = [Motif::FanIn, Motif::FanOut, Motif::Relay, Motif::Burst];
    let mut motifs = BTreeMap::new();
    let mut next = 0;
    while next < fraud.len() {
        let motif = kinds[motif_pick.sample(&mut g.rng)];
        let t0 = START_TS + g.rng.random_range(0..span - 10 * DAY);
        let value = fraud_amount.sample(&mut g.rng);
        match motif {
            Motif::FanIn => {
                let f = fraud[next];
                next += 1;
                let width = g.rng.random_range(cfg.fan_width..=2 * cfg.fan_width);
                let sources = g.distinct(&regular, width, f);
                let mut total = 0.0;
                for &s in &sources {
                    let amt = value / width as f64 * g.rng.random_range(0.5..1.5);
                    total += amt;
                    let ts = t0 + g.rng.random_range(0..3 * DAY);
                    g.push(s, f, amt, ts);
                }
                let k = g.rng.random_range(1..=2);
                let sinks = g.distinct(&benign, k, f);
                for &s in &sinks {
                    let ts = t0 + 3 * DAY + g.rng.random_range(0..DAY);
                    g.push(f, s, 0.95 * total / sinks.len() as f64, ts);
                }
                motifs.insert(g.ids[f].clone(), motif);
            }
            Motif::FanOut => {
                let f = fraud[next];
                next += 1;
                let src = *benign.choose(&mut g.rng).expect("non-empty");
                g.push(src, f, value, t0);
                let width = g.rng.random_range(cfg.fan_width..=2 * cfg.fan_width);
                let receivers = g.distinct(&regular, width, f);
                for &r in &receivers {
                    let ts = t0 + g.rng.random_range(HOUR..12 * HOUR);
                    g.push(f, r, 0.97 * value / receivers.len() as f64, ts);
                }
                motifs.insert(g.ids[f].clone(), motif);
            }
            Motif::Relay => {
                let len = (fraud.len() - next).min(3);
                let chain: Vec<usize> = fraud[next..next + len].to_vec();
                next += len;
                let src = *regular.choose(&mut g.rng).expect("non-empty");
                let mut ts = t0;
                let mut amt = value;
                g.push(src, chain[0], amt, ts);
                for w in chain.windows(2) {
                    ts += g.rng.random_range(HOUR..6 * HOUR);
                    amt *= 0.98;
                    g.push(w[0], w[1], amt, ts);
                }
                let sink = *benign.choose(&mut g.rng).expect("non-empty");
                ts += g.rng.random_range(HOUR..6 * HOUR);
                g.push(*chain.last().expect("non-empty"), sink, amt * 0.98, ts);
                for &c in &chain {
                    motifs.insert(g.ids[c].clone(), motif);
                }
            }
            Motif::Burst => {
                let f = fraud[next];
                next += 1;
                let k = g.rng.random_range(6..=10);
                let senders = g.distinct(&regular, k, f);
                let mut total = 0.0;
                for &s in &senders {
                    let amt = value / senders.len() as f64;
                    total += amt;
                    let ts = t0 + g.rng.random_range(0..20 * HOUR);
                    g.push(s, f, amt, ts);
                }
                let sink = *benign.choose(&mut g.rng).expect("non-empty");
                let n = g.rng.random_range(20..=40);
                for i in 0..n {
                    g.push(f, sink, 0.98 * total / n as f64, t0 + 20 * HOUR + i as u64 * 60);
                }
                motifs.insert(g.ids[f].clone(), motif);
            }
        }
    }
    for &f in &fraud {
        if g.rng.random_bool(0.3) {
            let p = *regular.choose(&mut g.rng).expect("non-empty");
            let amt = g.benign_amount.sample(&mut g.rng);
            let ts = START_TS + g.rng.random_range(0..span);
            g.push(p, f, amt, ts);
        }
    }

    let mut txs = g.txs;
    txs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.tx_id.cmp(&b.tx_id)));
    let fraud_set: BTreeSet<usize> = fraud.iter().copied().collect();
    let mut labels: Vec<(String, Label)> = (0..cfg.n_accounts)
        .map(|i| (g.ids[i].clone(), if fraud_set.contains(&i) { Label::Fraud } else { Label::Benign }))
        .collect();
    labels.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SynthCorpus { transactions: txs, labels, motifs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_accounts: 100, fraud_ratio: 0.1, seed: 1, ..Default::default() }
    }

    #[test]
    fn exact_fraud_count() {
        let c = synthgen(&small()).unwrap();
        assert_eq!(c.labels.iter().filter(|l| l.1 == Label::Fraud).count(), 10);
        assert_eq!(c.labels.len(), 100);
        assert_eq!(c.motifs.len(), 10);
    }

    #[test]
    fn fan_in_nodes_have_wide_in_degree() {
        let cfg = SynthConfig { n_accounts: 400, ..Default::default() };
        let c = synthgen(&cfg).unwrap();
        let (g, _) = c.graph().unwrap();
        let mut checked = 0;
        for (acct, m) in &c.motifs {
            if *m == Motif::FanIn {
                let n = g.node(acct).unwrap();
                assert!(g.in_edges(n).count() >= cfg.fan_width, "{acct}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthgen(&small()).unwrap();
        let b = synthgen(&small()).unwrap();
        assert_eq!(a.transactions_csv().unwrap(), b.transactions_csv().unwrap());
        assert_eq!(a.graph().unwrap().0.to_json().unwrap(), b.graph().unwrap().0.to_json().unwrap());
        let c = synthgen(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.transactions_csv().unwrap(), c.transactions_csv().unwrap());
    }

    #[test]
    fn zero_fraud_is_a_config_error() {
        let cfg = SynthConfig { n_accounts: 100, fraud_ratio: 0.001, ..Default::default() };
        assert!(matches!(synthgen(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn csv_ingests_back() {
        let c = synthgen(&small()).unwrap();
        let csv = c.transactions_csv().unwrap();
        let (g, r) = crate::ingest::ingest_reader(csv.as_bytes(), crate::ingest::InputFormat::Csv, Chain::Ethereum).unwrap();
        assert_eq!(r.retained as usize, c.transactions.len());
        let direct = ingest_transactions(c.transactions.iter().cloned().map(Ok), Chain::Ethereum).0;
        assert_eq!(g, direct);
    }
}
