//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Pass substrings as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- c3 c7`.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use chainfraud::eval::{auc, ks, synthgen, EvalReport, SynthConfig};
use chainfraud::ingest::{ingest_transactions, Amount, Chain, NodeId, RawTransaction, TransactionGraph, TxStatus};
use chainfraud::model::{loss_and_grad, sample_loss, sigmoid, normalized_adjacency, DualPathParams, LossWeights, SampleInputs, TextEmbedder};
use chainfraud::pipeline::{redaction_audit, run_synthetic, Layout, PipelineConfig};
use chainfraud::subgraph::{build_subgraphs, compress_sigc, importance_score, sample_khop, structural_importance, SamplingConfig, Subgraph};
use chainfraud::summary::{
    build_forensic_prompt, sentence_features, split_summary, summarize_accounts, AccountDossier, BackendTag,
    EvidenceStore, MockSummarizer, PromptConfig, RedactionAuditor, SplitMode, SplitPolicy, TransactionSummary,
    FEATURE_DIM, KEYWORD_GROUPS,
};
use chainfraud::train::{
    policy_digest, reward_from_loss, sample_policy_step, stage1_epoch, stage2_epoch, update_baseline, AdamW,
    BaselineState, Corpus, TrainConfig,
};
use chainfraud::Label;
use chainfraud::EdgeRecord;
use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tx(k: usize, from: &str, to: &str, amount: u128) -> RawTransaction {
    RawTransaction {
        chain: Chain::Generic,
        tx_id: format!("t{k}"),
        from: from.into(),
        to: to.into(),
        amount: Amount(amount),
        timestamp: k as u64,
        fee: None,
        status: TxStatus::Success,
        aux: Default::default(),
    }
}

// ---------------------------------------------------------------- c1: SIGC

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> TransactionGraph {
    let m = rng.random_range(n..=3 * n);
    let txs: Vec<_> = (0..m)
        .map(|k| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n);
            if b == a {
                b = (a + 1) % n;
            }
            // A coarse amount grid creates importance ties.
            let amount = if rng.random_bool(0.3) { 100_000_000 } else { rng.random_range(1..1_000_000_000_000u128) };
            Ok(tx(k, &format!("A{a:03}"), &format!("A{b:03}"), amount))
        })
        .collect();
    ingest_transactions(txs, Chain::Generic).0
}

fn undirected_bfs(nodes: &[NodeId], edges: &[EdgeRecord], root: NodeId) -> HashMap<NodeId, u32> {
    let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for e in edges {
        adj.entry(e.src).or_default().push(e.dst);
        adj.entry(e.dst).or_default().push(e.src);
    }
    let members: HashSet<NodeId> = nodes.iter().copied().collect();
    let mut dist = HashMap::from([(root, 0u32)]);
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        for &v in adj.get(&u).into_iter().flatten() {
            if members.contains(&v) && !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Importance of every non-centre node recomputed from the edge list.
fn oracle_importance(sub: &Subgraph, beta: f64) -> Vec<(NodeId, f64)> {
    let dist = undirected_bfs(&sub.nodes, &sub.edges, sub.center);
    sub.nodes
        .iter()
        .skip(1)
        .map(|&u| {
            let (mut a, mut d) = (0u128, 0u64);
            for e in &sub.edges {
                if e.src == u || e.dst == u {
                    a += e.cum_amount.0;
                    d += 1;
                }
            }
            let native = a as f64 / 1e8;
            let s = ((native + 1.0).ln() + beta * (d as f64 + 1.0).ln()) / (f64::from(dist[&u]) + 1.0);
            (u, s)
        })
        .collect()
}

fn c1_sigc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut slowest = Duration::ZERO;
    let mut compressed_count = 0;
    for g_idx in 0..200 {
        let n = rng.random_range(2..=200);
        let graph = random_graph(&mut rng, n);
        let cfg = SamplingConfig {
            hops: rng.random_range(1..=3),
            per_hop: rng.random_range(1..=12),
            budget: rng.random_range(1..=15),
            beta: rng.random_range(0.0..3.0),
        };
        let center = NodeId(rng.random_range(0..graph.node_count() as u32));
        let t = Instant::now();
        let sampled = sample_khop(&graph, center, &cfg).map_err(|e| e.to_string())?;
        let out = compress_sigc(&sampled, &cfg);
        slowest = slowest.max(t.elapsed());
        let again = compress_sigc(&out, &cfg);

        let ctx = |what: &str| format!("graph {g_idx} (n={n}, {cfg:?}): {what}");
        ensure(out.center == center && out.nodes.first() == Some(&center), || ctx("centre missing"))?;
        let dist = undirected_bfs(&out.nodes, &out.edges, center);
        ensure(dist.len() == out.nodes.len(), || ctx("compressed subgraph is disconnected"))?;
        ensure(again == out, || ctx("compression is not idempotent"))?;

        let mut scores = oracle_importance(&sampled, cfg.beta);
        if scores.len() <= cfg.budget {
            ensure(out.nodes.len() == sampled.nodes.len(), || ctx("small subgraph lost nodes"))?;
            continue;
        }
        compressed_count += 1;
        scores.sort_by(|a, b| b.1.total_cmp(&a.1));
        let cutoff = scores[cfg.budget - 1].1;
        let kept: HashSet<NodeId> = out.nodes.iter().copied().collect();
        for &(u, s) in &scores {
            if s > cutoff + 1e-9 {
                ensure(kept.contains(&u), || ctx(&format!("top node {} (S={s}) dropped", u.0)))?;
            }
        }
        let near_top = scores.iter().filter(|(u, s)| *s >= cutoff - 1e-9 && kept.contains(u)).count();
        ensure(near_top >= cfg.budget, || ctx("fewer than N_c top-ranked nodes kept"))?;
    }
    ensure(slowest < Duration::from_secs(1), || format!("slowest graph took {slowest:?}"))?;
    Ok(format!("200 graphs ({compressed_count} compressed), slowest {:.1} ms", slowest.as_secs_f64() * 1e3))
}

// ------------------------------------------------------ c2: importance oracle

fn edge(src: u32, dst: u32, amount: u128) -> EdgeRecord {
    EdgeRecord {
        src: NodeId(src),
        dst: NodeId(dst),
        cum_amount: Amount(amount),
        tx_count: 1,
        first_ts: 0,
        last_ts: 0,
        aux_sums: Default::default(),
    }
}

fn c2_importance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0f64;
    let mut zero_cases = 0;
    for i in 0..1000 {
        let zero = i % 10 == 0;
        let (d_in, d_out) = if zero { (0, 0) } else { (rng.random_range(0..6u32), rng.random_range(0..6u32)) };
        let (d_in, d_out) = if !zero && d_in + d_out == 0 { (1, 0) } else { (d_in, d_out) };
        let hop = rng.random_range(1..=4u32);
        let beta = if i % 7 == 0 { 0.0 } else { rng.random_range(0.0..4.0) };

        // Centre 0, path 1..hop-1, target `hop`, partners after that.
        let u = hop;
        let mut nodes: Vec<u32> = (0..=hop).collect();
        let mut hops: Vec<u32> = (0..=hop).collect();
        let mut edges: Vec<EdgeRecord> = (1..hop).map(|k| edge(k - 1, k, 1)).collect();
        let (mut a_in, mut a_out) = (0u128, 0u128);
        let mut next = hop + 1;
        for j in 0..d_in {
            let amt = rng.random_range(1..10_000_000_000_000u128);
            a_in += amt;
            let src = if j == 0 { hop - 1 } else { next };
            if j > 0 {
                nodes.push(next);
                hops.push(hop + 1);
                next += 1;
            }
            edges.push(edge(src, u, amt));
        }
        for j in 0..d_out {
            let amt = rng.random_range(1..10_000_000_000_000u128);
            a_out += amt;
            let dst = if j == 0 && d_in == 0 { hop - 1 } else { next };
            if !(j == 0 && d_in == 0) {
                nodes.push(next);
                hops.push(hop + 1);
                next += 1;
            }
            edges.push(edge(u, dst, amt));
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        let sub = Subgraph {
            chain: Chain::Generic,
            center: NodeId(0),
            nodes: nodes.into_iter().map(NodeId).collect(),
            hop: hops,
            edges,
            ranks: None,
        };
        let a = (a_in as f64 + a_out as f64) / 1e8;
        let d = f64::from(d_in + d_out);
        let expected = ((a + 1.0).ln() + beta * (d + 1.0).ln()) / (f64::from(hop) + 1.0);
        let got = structural_importance(&sub, NodeId(u), beta).map_err(|e| e.to_string())?;
        let direct = importance_score(a_in as f64 / 1e8, a_out as f64 / 1e8, d_in.into(), d_out.into(), beta, hop);
        worst = worst.max((got - expected).abs()).max((direct - expected).abs());
        if zero {
            zero_cases += 1;
            ensure(got == 0.0 && direct == 0.0, || format!("all-zero tuple {i} gave {got} / {direct}"))?;
        }
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    Ok(format!("1000 tuples ({zero_cases} all-zero), max abs error {worst:.1e}"))
}

// ---------------------------------------------------- c3: gradient check

fn random_instance(rng: &mut ChaCha8Rng) -> (DualPathParams, SampleInputs, f64, LossWeights) {
    let n = rng.random_range(1..=20);
    let d = rng.random_range(1..=16);
    let h = rng.random_range(1..=8);
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.3) {
                adj[[i, j]] = 1.0;
                adj[[j, i]] = 1.0;
            }
        }
    }
    let mut m = || Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let x = SampleInputs { a_hat: normalized_adjacency(&adj), disc: m(), resi: m(), orig: m(), center: 0 };
    let mut p = DualPathParams::init(d, h, rng.random());
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-0.6..0.6));
    }
    let label = f64::from(u8::from(rng.random_bool(0.5)));
    let w = LossWeights { resi: rng.random_range(0.05..1.0), orth: rng.random_range(0.05..1.0) };
    (p, x, label, w)
}

fn c3_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let step = 1e-5;
    let mut worst = 0f64;
    let mut coords = 0;
    for inst in 0..20 {
        let (p, x, label, w) = random_instance(&mut rng);
        let (_, grad) = loss_and_grad(&p, &x, label, w).map_err(|e| e.to_string())?;
        let analytic = grad.flatten();
        let mut k = 0;
        let sizes: Vec<usize> = p.clone().tensors_mut().iter().map(|t| t.len()).collect();
        for (ti, &len) in sizes.iter().enumerate() {
            for idx in 0..len {
                let eval = |delta: f64| {
                    let mut q = p.clone();
                    q.tensors_mut()[ti][idx] += delta;
                    sample_loss(&q, &x, label, w).map(|l| l.total)
                };
                let numeric = (eval(step).map_err(|e| e.to_string())? - eval(-step).map_err(|e| e.to_string())?) / (2.0 * step);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                ensure(rel <= 1e-4, || format!("instance {inst} coordinate {k}: analytic {a} numeric {numeric} (rel {rel:e})"))?;
                worst = worst.max(rel);
                k += 1;
            }
        }
        coords += k;
    }
    Ok(format!("20 instances, {coords} coordinates, worst relative error {worst:.1e}"))
}

// ------------------------------------------------ toy corpora for c4, c5, c8

struct Toy {
    corpus: Corpus,
    nodes: Vec<NodeId>,
    graph: TransactionGraph,
}

/// Pairs of accounts `F{i} -> B{i}`, each with a fixed summary text.
fn toy_corpus(texts: &[(&str, Label, String)], pairs: &[(usize, usize)], embed_dim: usize) -> Toy {
    let txs: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Ok(tx(k, texts[a].0, texts[b].0, 1_000_000)))
        .collect();
    let mut graph = ingest_transactions(txs, Chain::Generic).0;
    graph.attach_labels(texts.iter().map(|(a, l, _)| (*a, *l))).unwrap();
    let nodes: Vec<NodeId> = graph.labeled_nodes().into_iter().map(|(n, _)| n).collect();
    let subs = build_subgraphs(&graph, &nodes, &SamplingConfig::default()).unwrap();
    let summaries: Vec<_> = texts
        .iter()
        .map(|(a, _, t)| {
            TransactionSummary::new(graph.node(a).unwrap(), t.clone(), BackendTag::Mock, format!("key-{a}")).unwrap()
        })
        .collect();
    let mut corpus = Corpus::new(&graph, &subs, &summaries, TextEmbedder::hashed(embed_dim, 5).unwrap()).unwrap();
    corpus.refresh(&SplitPolicy::default()).unwrap();
    Toy { corpus, nodes, graph }
}

/// Replays a fixed list of outcomes: `true` draws 0.0 (selected), `false`
/// draws just below 1.0 (not selected).
struct Scripted(Vec<bool>, usize);

impl RngCore for Scripted {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }
    fn next_u64(&mut self) -> u64 {
        let v = self.0[self.1];
        self.1 += 1;
        if v {
            0
        } else {
            u64::MAX
        }
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(0)
    }
}

fn probabilities(policy: &SplitPolicy, sentences: &[String]) -> Vec<f64> {
    sentences
        .iter()
        .map(|s| {
            let z: f64 = policy.weights.iter().zip(sentence_features(s)).map(|(w, x)| w * x).sum::<f64>() + policy.bias;
            sigmoid(z / policy.temperature)
        })
        .collect()
}

/// Reward of every draw pattern of `node`'s sentences, realized by the
/// production split (including its empty-selection fallback).
fn pattern_rewards(toy: &Toy, node: NodeId, policy: &SplitPolicy, params: &DualPathParams, w: LossWeights) -> Vec<(Vec<bool>, f64)> {
    let summary = toy.corpus.summary(node).unwrap().clone();
    let n = summary.sentences.len();
    let label = toy.corpus.label(node).unwrap();
    (0..1u32 << n)
        .map(|mask| {
            let draw: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let mut script = Scripted(draw.clone(), 0);
            let split = split_summary(&summary, policy, SplitMode::Sample(&mut script)).unwrap();
            assert_eq!(split.draws, draw);
            let (dv, rv) = toy.corpus.embed_split(&split).unwrap();
            let x = toy.corpus.inputs(node, Some((&dv, &rv))).unwrap();
            let r = reward_from_loss(sample_loss(params, &x, label, w).unwrap().total).unwrap();
            (draw, r)
        })
        .collect()
}

fn pattern_prob(p: &[f64], draw: &[bool]) -> f64 {
    p.iter().zip(draw).map(|(&p, &d)| if d { p } else { 1.0 - p }).product()
}

fn expected_reward(toy: &Toy, node: NodeId, policy: &SplitPolicy, params: &DualPathParams, w: LossWeights) -> f64 {
    let p = probabilities(policy, &toy.corpus.summary(node).unwrap().sentences);
    pattern_rewards(toy, node, policy, params, w).iter().map(|(d, r)| pattern_prob(&p, d) * r).sum()
}

/// Exact `∇ E[R]` over `(weights, bias)` by enumeration.
fn exact_gradient(toy: &Toy, node: NodeId, policy: &SplitPolicy, params: &DualPathParams, w: LossWeights) -> Vec<f64> {
    let sentences = toy.corpus.summary(node).unwrap().sentences.clone();
    let p = probabilities(policy, &sentences);
    let feats: Vec<Vec<f64>> = sentences.iter().map(|s| sentence_features(s)).collect();
    let mut g = vec![0.0; FEATURE_DIM + 1];
    for (draw, r) in pattern_rewards(toy, node, policy, params, w) {
        let weight = pattern_prob(&p, &draw) * r;
        for (i, &d) in draw.iter().enumerate() {
            let c = (f64::from(u8::from(d)) - p[i]) / policy.temperature;
            for (k, phi) in feats[i].iter().enumerate() {
                g[k] += weight * c * phi;
            }
            g[FEATURE_DIM] += weight * c;
        }
    }
    g
}

// ------------------------------------------------------- c4: REINFORCE

fn c4_reinforce() -> Outcome {
    let rich = "Total inflow of 12.5 units was received from 7 senders. \
                Funds were forwarded through a mixer within 2 hours. \
                A sudden burst of 9 transactions followed. \
                Overall the activity may warrant monitoring.";
    let texts = vec![
        ("F00", Label::Fraud, rich.to_string()),
        ("B00", Label::Benign, "Payments of 3 units went to one merchant. The account appears ordinary.".to_string()),
    ];
    let toy = toy_corpus(&texts, &[(0, 1)], 32);
    let node = toy.graph.node("F00").unwrap();
    let sentences = toy.corpus.summary(node).unwrap().sentences.clone();
    ensure(sentences.len() <= 8, || "toy has too many sentences".into())?;
    let active: Vec<bool> = (0..FEATURE_DIM).map(|k| sentences.iter().any(|s| sentence_features(s)[k] != 0.0)).collect();
    ensure(active.iter().all(|&a| a), || format!("toy leaves features inactive: {active:?}"))?;

    let mut prng = ChaCha8Rng::seed_from_u64(404);
    let mut params = DualPathParams::init(32, 8, 404);
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = prng.random_range(-0.8..0.8));
    }
    let policy = SplitPolicy {
        weights: (0..FEATURE_DIM).map(|_| prng.random_range(-0.7..0.7)).collect(),
        bias: 0.1,
        temperature: 1.0,
    };
    let w = LossWeights { resi: 0.05, orth: 0.3 };
    let exact = exact_gradient(&toy, node, &policy, &params, w);

    // Cross-check the enumeration against finite differences of E[R].
    for (k, &want) in exact.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut q = policy.clone();
            if k < FEATURE_DIM {
                q.weights[k] += delta;
            } else {
                q.bias += delta;
            }
            expected_reward(&toy, node, &q, &params, w)
        };
        let fd = (shifted(1e-6) - shifted(-1e-6)) / 2e-6;
        ensure((fd - want).abs() <= 1e-7, || format!("enumeration vs finite differences at {k}: {want} vs {fd}"))?;
    }

    const N: usize = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4040);
    let mut baseline = BaselineState::new(0.9);
    let dim = FEATURE_DIM + 1;
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut sum_b, mut sq_b) = (vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..N {
        let s = sample_policy_step(&toy.corpus, node, &policy, &params, w, &mut rng).map_err(|e| e.to_string())?;
        let adv = baseline.advantage(s.reward);
        baseline = update_baseline(baseline, s.reward);
        for k in 0..dim {
            let plain = s.reward * s.score[k];
            let based = adv * s.score[k];
            sum[k] += plain;
            sq[k] += plain * plain;
            sum_b[k] += based;
            sq_b[k] += based * based;
        }
    }
    let n = N as f64;
    let mut worst_z = 0f64;
    let mut ratios = Vec::new();
    for k in 0..dim {
        let mean = sum[k] / n;
        let var = (sq[k] / n - mean * mean) * n / (n - 1.0);
        let se = (var / n).sqrt();
        let z = (mean - exact[k]).abs() / se;
        ensure((mean - exact[k]).abs() <= 3.0 * se, || format!("coordinate {k}: MC {mean} vs exact {} ({z:.2} SE)", exact[k]))?;
        worst_z = worst_z.max(z);
        let mean_b = sum_b[k] / n;
        let var_b = (sq_b[k] / n - mean_b * mean_b) * n / (n - 1.0);
        let se_b = (var_b / n).sqrt();
        ensure((mean_b - exact[k]).abs() <= 3.0 * se_b, || format!("coordinate {k} with baseline: MC {mean_b} vs exact {}", exact[k]))?;
        ensure(var_b < var, || format!("coordinate {k}: baseline variance {var_b} not below {var}"))?;
        ratios.push(var_b / var);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(format!("{dim} coordinates within {worst_z:.2} SE; baseline variance ratio <= {max_ratio:.3}"))
}

// -------------------------------------------------- c5: Stage-1 learning signal

const MIXER: usize = 2;

/// Fraud and benign summaries differ only in their first sentence, and only
/// the fraud one carries a mixer keyword. The informative sentences are longer
/// than the shared filler, so the empty-draw fallback promotes them.
fn keyword_corpus() -> Toy {
    let mut texts = Vec::new();
    for i in 0..20 {
        texts.push((
            format!("F{i:02}"),
            Label::Fraud,
            "Funds were laundered through a mixer before leaving again. No further notes.".to_string(),
        ));
        texts.push((
            format!("B{i:02}"),
            Label::Benign,
            "Payments went to one local merchant each time. No further notes.".to_string(),
        ));
    }
    let owned: Vec<(&str, Label, String)> = texts.iter().map(|(a, l, t)| (a.as_str(), *l, t.clone())).collect();
    let pairs: Vec<(usize, usize)> = (0..20).map(|i| (2 * i, 2 * i + 1)).collect();
    toy_corpus(&owned, &pairs, 64)
}

fn c5_stage1_signal() -> Outcome {
    assert_eq!(KEYWORD_GROUPS[MIXER].0, "mixer");
    let mut toy = keyword_corpus();
    let cfg = TrainConfig { embed_dim: 64, hidden_dim: 16, lr_gnn: 1e-2, lr_policy: 5e-6, ..TrainConfig::default() };
    let w = cfg.loss_weights();
    let mut params = DualPathParams::init(64, 16, 55);
    // Start away from p = 0.5 so the deterministic neighbour splits do not
    // flip on the first update.
    let mut policy = SplitPolicy { bias: 1.0, ..SplitPolicy::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut opt = AdamW::new(cfg.lr_gnn, cfg.weight_decay);
    for _ in 0..20 {
        stage2_epoch(&mut toy.corpus, &toy.nodes, &policy, &mut params, &mut opt, &cfg, &mut rng).map_err(|e| e.to_string())?;
    }
    let mean_reward = |toy: &mut Toy, policy: &SplitPolicy| {
        toy.corpus.refresh(policy).unwrap();
        let nodes = toy.nodes.clone();
        nodes.iter().map(|&v| expected_reward(toy, v, policy, &params, w)).sum::<f64>() / nodes.len() as f64
    };

    let w0 = policy.weights[MIXER];
    let mut rewards = vec![mean_reward(&mut toy, &policy)];
    let mut popt = AdamW::new(cfg.lr_policy, 0.0);
    let mut baseline = BaselineState::new(cfg.ema_momentum);
    // One step is one Stage-1 pass over the corpus; the reward after each step
    // is the exact expected reward, enumerated over all draws.
    for step in 0..200 {
        let mut step_rng = ChaCha8Rng::seed_from_u64(5050 + step);
        let nodes = toy.nodes.clone();
        stage1_epoch(&mut toy.corpus, &nodes, &mut policy, &mut popt, &params, &mut baseline, &cfg, &mut step_rng)
            .map_err(|e| e.to_string())?;
        rewards.push(mean_reward(&mut toy, &policy));
    }
    let w1 = policy.weights[MIXER];
    ensure(w1 > w0, || format!("mixer weight did not increase: {w0} -> {w1}"))?;
    let smooth: Vec<f64> = rewards.windows(3).map(|x| x.iter().sum::<f64>() / 3.0).collect();
    for (i, pair) in smooth.windows(2).enumerate() {
        ensure(pair[1] >= pair[0], || format!("smoothed reward fell at step {}: {} -> {}", i + 1, pair[0], pair[1]))?;
    }
    Ok(format!(
        "mixer weight {w0:.3} -> {w1:.3}; smoothed mean reward {:.4} -> {:.4}",
        smooth[0],
        smooth[smooth.len() - 1]
    ))
}

// --------------------------------------------------- c6: end-to-end benchmark

struct E2eRun {
    dir: tempfile::TempDir,
    report: EvalReport,
    elapsed: Duration,
}

static FIRST_RUN: OnceLock<Result<E2eRun, String>> = OnceLock::new();

fn e2e_config() -> PipelineConfig {
    PipelineConfig::default()
}

fn run_e2e() -> Result<E2eRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = Instant::now();
    let out = run_synthetic(&Layout::new(dir.path()), &e2e_config(), &MockSummarizer::new()).map_err(|e| e.to_string())?;
    Ok(E2eRun { dir, report: out.report, elapsed: t.elapsed() })
}

fn first_run() -> Result<&'static E2eRun, String> {
    FIRST_RUN.get_or_init(run_e2e).as_ref().map_err(Clone::clone)
}

fn c6_benchmark() -> Outcome {
    let cfg = e2e_config();
    let s = cfg.sampling;
    let t = &cfg.train;
    ensure(
        (s.per_hop, s.hops, s.beta, s.budget) == (10, 2, 2.0, 10)
            && (t.lambda_resi, t.lambda_orth) == (0.05, 0.3)
            && (t.outer_epochs, t.inner_epochs) == (2, 10)
            && cfg.synth.n_accounts == 2000
            && cfg.synth.fraud_ratio == 0.1,
        || "benchmark configuration differs from the required defaults".into(),
    )?;
    let run = first_run()?;
    let r = &run.report;
    let (auc, ks) = (r.auc.unwrap_or(0.0), r.ks.unwrap_or(0.0));
    let detail = format!("test AUC {auc:.4}, KS {ks:.4}, F1 {:.4}, {:.1} s", r.f1.unwrap_or(0.0), run.elapsed.as_secs_f64());
    ensure(auc >= 0.90 && ks >= 0.60 && run.elapsed <= Duration::from_secs(600), || detail.clone())?;
    Ok(detail)
}

// ------------------------------------------------------------- c7: metrics

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &p in pos {
        for &n in neg {
            twice += match p.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

fn brute_ks(pos: &[f64], neg: &[f64]) -> f64 {
    let cdf = |v: &[f64], t: f64| v.iter().filter(|&&x| x <= t).count() as f64 / v.len() as f64;
    pos.iter().chain(neg).map(|&t| (cdf(pos, t) - cdf(neg, t)).abs()).fold(0.0, f64::max)
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for set in 0..100 {
        let n = rng.random_range(2..=500);
        let coarse = set % 2 == 0;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..n {
            let s = if coarse { f64::from(rng.random_range(0..=20u32)) / 20.0 } else { rng.random::<f64>() };
            let fraud = if i == 0 { true } else if i == 1 { false } else { rng.random_bool(0.3) };
            if fraud {
                pos.push(s)
            } else {
                neg.push(s)
            }
        }
        let a = auc(&pos, &neg).unwrap();
        let k = ks(&pos, &neg).unwrap();
        ensure(a == brute_auc(&pos, &neg), || format!("set {set}: AUC {a} vs oracle {}", brute_auc(&pos, &neg)))?;
        ensure((k - brute_ks(&pos, &neg)).abs() <= 1e-12, || format!("set {set}: KS {k} vs oracle {}", brute_ks(&pos, &neg)))?;
    }
    let worked = ks(&[0.9, 0.8, 0.4], &[0.7, 0.3, 0.2]).unwrap();
    ensure((worked - 2.0 / 3.0).abs() <= 1e-12, || format!("worked example KS {worked}"))?;
    Ok(format!("100 score sets match both oracles; worked example KS = {worked:.6}"))
}

// ------------------------------------------------ c8: freeze and determinism

fn c8_freeze_determinism() -> Outcome {
    let mut toy = keyword_corpus();
    let cfg = TrainConfig { embed_dim: 64, hidden_dim: 16, lr_policy: 1e-2, ..TrainConfig::default() };
    let mut params = DualPathParams::init(64, 16, 8);
    let mut policy = SplitPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut popt = AdamW::new(cfg.lr_policy, 0.0);
    let mut gopt = AdamW::new(cfg.lr_gnn, cfg.weight_decay);
    let mut baseline = BaselineState::new(cfg.ema_momentum);
    for round in 0..3 {
        let (pd, gd) = (policy_digest(&policy), params.digest());
        stage1_epoch(&mut toy.corpus, &toy.nodes, &mut policy, &mut popt, &params, &mut baseline, &cfg, &mut rng)
            .map_err(|e| e.to_string())?;
        ensure(params.digest() == gd, || format!("round {round}: stage 1 changed the encoder"))?;
        ensure(policy_digest(&policy) != pd, || format!("round {round}: stage 1 left the policy unchanged"))?;
        let (pd, gd) = (policy_digest(&policy), params.digest());
        stage2_epoch(&mut toy.corpus, &toy.nodes, &policy, &mut params, &mut gopt, &cfg, &mut rng).map_err(|e| e.to_string())?;
        ensure(policy_digest(&policy) == pd, || format!("round {round}: stage 2 changed the policy"))?;
        ensure(params.digest() != gd, || format!("round {round}: stage 2 left the encoder unchanged"))?;
    }

    let first = first_run()?;
    let second = run_e2e()?;
    let files = ["train_log.jsonl", "train_meta.json", "model.json", "policy.json", "scores.csv", "report.csv", "curve.csv"];
    for f in files {
        let a = std::fs::read(first.dir.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(second.dir.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between identical runs"))?;
    }
    Ok(format!("digests hold over 3 alternations; {} artifacts byte-identical across two runs", files.len()))
}

// -------------------------------------------------------- c9: redaction

fn c9_redaction() -> Outcome {
    let synth = synthgen(&SynthConfig { n_accounts: 500, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    let (mut graph, _) = synth.graph().map_err(|e| e.to_string())?;
    graph.attach_labels(synth.labels.iter().map(|(a, l)| (a.as_str(), *l))).map_err(|e| e.to_string())?;
    let accounts: Vec<NodeId> = graph.labeled_nodes().into_iter().map(|(n, _)| n).collect();
    ensure(accounts.len() == 500, || format!("expected 500 labelled accounts, got {}", accounts.len()))?;

    let store = EvidenceStore::in_memory();
    let prompt_cfg = PromptConfig::default();
    summarize_accounts(&graph, &accounts, &MockSummarizer::new(), &store, &prompt_cfg, 8).map_err(|e| e.to_string())?;
    let scanned = redaction_audit(&graph, &accounts, &store, &prompt_cfg).map_err(|e| e.to_string())?;

    // Independent scan: no 10-character slice of any raw identifier (without
    // its 0x prefix) may appear in a prompt or a stored summary.
    let fragments: HashSet<String> = graph.account_ids().iter().map(|id| id.trim_start_matches("0x")[..10].to_lowercase()).collect();
    let mut texts: Vec<String> = accounts
        .iter()
        .map(|&n| build_forensic_prompt(&AccountDossier::from_graph(&graph, n).unwrap(), &prompt_cfg).unwrap())
        .collect();
    texts.extend(store.records().into_iter().map(|r| r.text));
    let mut hits = BTreeMap::new();
    for t in &texts {
        let lower = t.to_lowercase();
        let bytes = lower.as_bytes();
        for w in bytes.windows(10) {
            if let Ok(s) = std::str::from_utf8(w) {
                if fragments.contains(s) {
                    *hits.entry(s.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    ensure(hits.is_empty(), || format!("raw identifier fragments found: {hits:?}"))?;

    // The scanner must actually catch a leaked identifier.
    let leaked = format!("Funds moved to {}.", graph.account_ids()[0]);
    ensure(RedactionAuditor::default().find(&leaked).is_some(), || "auditor missed a planted identifier".into())?;
    Ok(format!("{} texts scanned ({} prompts, {} summaries), 0 identifiers", texts.len(), accounts.len(), scanned - accounts.len()))
}

// -------------------------------------------------------------------- main

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("c1", "SIGC properties", c1_sigc),
        ("c2", "importance oracle", c2_importance),
        ("c3", "gradient check", c3_gradient),
        ("c4", "REINFORCE unbiasedness", c4_reinforce),
        ("c5", "stage-1 learning signal", c5_stage1_signal),
        ("c6", "end-to-end benchmark", c6_benchmark),
        ("c7", "metric oracles", c7_metrics),
        ("c8", "freeze and determinism", c8_freeze_determinism),
        ("c9", "redaction audit", c9_redaction),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        for (id, name, _) in &criteria {
            println!("{id} {name}: test");
        }
        return;
    }
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
