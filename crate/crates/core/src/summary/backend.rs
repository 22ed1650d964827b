use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::agents::{parse_agent_prompt, AgentRole};
use super::prompt::{fmt_num, parse_aggregates};
use super::split::{sentence_features, HEDGE_FEATURE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Remote,
    Mock,
}

impl BackendTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendTag::Remote => "remote",
            BackendTag::Mock => "mock",
        }
    }
}

/// One text completion, with per-token log-probabilities when the backend
/// reports them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Option<Vec<f64>>,
}

impl Completion {
    pub fn sequence_logprob(&self) -> Option<f64> {
        self.token_logprobs.as_ref().map(|v| v.iter().sum())
    }
}

/// A text generator that turns prompts into completions.
pub trait Summarizer: Send + Sync {
    fn tag(&self) -> BackendTag;
    fn complete(&self, prompt: &str, logprobs: bool) -> Result<Completion>;
}

/// Offline backend producing rule-based sentences from the aggregate block of
/// a forensic prompt. For analyst-agent prompts it echoes the source sentences
/// it considers relevant to its role.
#[derive(Debug, Default)]
pub struct MockSummarizer {
    calls: AtomicUsize,
}

impl MockSummarizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Summarizer for MockSummarizer {
    fn tag(&self) -> BackendTag {
        BackendTag::Mock
    }

    fn complete(&self, prompt: &str, _logprobs: bool) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some((role, sentences)) = parse_agent_prompt(prompt) {
            let picked: Vec<&str> = sentences
                .iter()
                .filter(|s| {
                    let f = sentence_features(s);
                    let informative = f[..HEDGE_FEATURE].iter().any(|&x| x > 0.0) && f[HEDGE_FEATURE] == 0.0;
                    informative == (role == AgentRole::Discriminative)
                })
                .map(|s| s.as_str())
                .collect();
            return Ok(Completion { text: picked.join(" "), token_logprobs: None });
        }
        let agg = parse_aggregates(prompt)
            .ok_or_else(|| Error::Data("mock backend: prompt has no aggregate block".into()))?;
        Ok(Completion { text: mock_rules(&agg)?.join(" "), token_logprobs: None })
    }
}

/// Outflow (or inflow) is said to dominate when it exceeds the other
/// direction by this factor.
pub const DOMINANCE_RATIO: f64 = 10.0;
pub const FAN_MIN_PARTNERS: usize = 5;
pub const BURST_MIN_PARTNERS: usize = 5;
pub const HIGH_FREQUENCY_TX: u64 = 20;

fn mock_rules(agg: &BTreeMap<String, String>) -> Result<Vec<String>> {
    let num = |k: &str| -> Result<f64> {
        agg.get(k)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Data(format!("mock backend: aggregate {k:?} missing or not numeric")))
    };
    let unit = agg.get("unit").map_or("units", |s| s.as_str());
    let (total_in, total_out) = (num("total_in")?, num("total_out")?);
    let (tx_in, tx_out) = (num("tx_in")?, num("tx_out")?);
    let partners = num("unique_partners")?;
    let (in_p, out_p) = (num("in_partners")? as usize, num("out_partners")? as usize);
    let span = num("active_span_days")?;
    let fee = num("fee_total")?;
    let burst = num("burst_partners")? as usize;
    let max_tx = num("max_partner_tx")? as u64;
    let top = agg.get("top_partner").map_or("none", |s| s.as_str());

    let mut out = vec![format!(
        "The account was active for {} days with {} transactions across {} distinct counterparties.",
        fmt_num(span),
        tx_in + tx_out,
        partners
    )];
    if total_out > 0.0 && total_out > DOMINANCE_RATIO * total_in {
        let ratio = if total_in > 0.0 { format!("{} times", fmt_num((total_out / total_in * 10.0).round() / 10.0)) } else { "far above".into() };
        out.push(format!(
            "Value flow shows net outflow dominance, with outgoing volume of {} {unit} at {ratio} the incoming volume.",
            fmt_num(total_out)
        ));
    } else if total_in > 0.0 && total_in > DOMINANCE_RATIO * total_out {
        out.push(format!(
            "Value flow shows net inflow dominance, with {} {unit} received and only {} {unit} sent.",
            fmt_num(total_in),
            fmt_num(total_out)
        ));
    } else {
        out.push(format!(
            "Incoming volume of {} {unit} and outgoing volume of {} {unit} are broadly balanced.",
            fmt_num(total_in),
            fmt_num(total_out)
        ));
        if total_in > 0.0 && total_out > 0.0 && span < 7.0 && (total_out / total_in - 1.0).abs() <= 0.1 {
            out.push(format!(
                "Funds were forwarded rapidly, with {}% of inflow passed through within the active period.",
                fmt_num((100.0 * total_out / total_in).round())
            ));
        }
    }
    if in_p >= FAN_MIN_PARTNERS && in_p >= 3 * out_p.max(1) {
        out.push(format!("A fan-in pattern is present, with {in_p} senders converging on the account."));
    }
    if out_p >= FAN_MIN_PARTNERS && out_p >= 3 * in_p.max(1) {
        out.push(format!("A fan-out pattern is present, with funds dispersed to {out_p} receivers."));
    }
    if burst >= BURST_MIN_PARTNERS {
        out.push(format!("A burst of {burst} new counterparties appeared within 24 hours of first activity."));
    }
    if max_tx >= HIGH_FREQUENCY_TX {
        out.push(format!("High frequency transfers were repeated with counterparty {top}, up to {max_tx} transactions with a single partner."));
    }
    if tx_in + tx_out <= 2.0 && span < 1.0 {
        out.push("The account appears dormant after a single short episode of activity.".into());
    }
    if tx_out > 0.0 {
        out.push(format!(
            "Gas expenditure totalled {} {unit}, about {} per outgoing transaction.",
            fmt_num(fee),
            fmt_num(fee / tx_out)
        ));
    } else {
        out.push("No gas was spent since the account never sent funds.".into());
    }
    out.push("Overall, the account may warrant further monitoring.".into());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub token_env: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080/v1/generate".into(),
            model: "default".into(),
            token_env: "CHAINFRAUD_LLM_TOKEN".into(),
            max_tokens: 512,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    logprobs: bool,
}

/// HTTP client for a JSON completion endpoint.
pub struct RemoteSummarizer {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteSummarizer {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        if cfg.max_attempts == 0 {
            return Err(Error::Config("remote backend needs at least one attempt".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteSummarizer { cfg, agent })
    }

    fn attempt(&self, body: &WireRequest<'_>) -> std::result::Result<Completion, (bool, String)> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Ok(token) = std::env::var(&self.cfg.token_env) {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, format!("HTTP status {status}")));
        }
        resp.body_mut()
            .read_json::<Completion>()
            .map_err(|e| (false, format!("malformed response: {e}")))
    }
}

impl Summarizer for RemoteSummarizer {
    fn tag(&self) -> BackendTag {
        BackendTag::Remote
    }

    fn complete(&self, prompt: &str, logprobs: bool) -> Result<Completion> {
        let body = WireRequest {
            model: &self.cfg.model,
            prompt,
            max_tokens: self.cfg.max_tokens,
            temperature: self.cfg.temperature,
            logprobs,
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err((retryable, message)) => {
                    if !retryable || attempts >= self.cfg.max_attempts {
                        return Err(Error::Backend { attempts, message });
                    }
                    std::thread::sleep(self.cfg.backoff * 2u32.pow(attempts - 1));
                }
            }
        }
    }
}
