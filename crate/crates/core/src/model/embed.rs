//! Deterministic text embeddings.

use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::text::{is_numeric, tokenize};

/// A source of fixed-width text vectors other than the built-in hasher, e.g. a
/// table of precomputed sentence-encoder outputs.
pub trait ExternalEmbed: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Clone)]
pub enum EmbedBackend {
    Hash { seed: u64 },
    External(Arc<dyn ExternalEmbed>),
}

impl std::fmt::Debug for EmbedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbedBackend::Hash { seed } => write!(f, "Hash {{ seed: {seed} }}"),
            EmbedBackend::External(e) => write!(f, "External {{ dim: {} }}", e.dim()),
        }
    }
}

/// Maps text to unit-norm vectors of width `dim`.
#[derive(Debug, Clone)]
pub struct TextEmbedder {
    dim: usize,
    backend: EmbedBackend,
}

impl TextEmbedder {
    pub fn hashed(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(TextEmbedder {
            dim,
            backend: EmbedBackend::Hash { seed },
        })
    }

    pub fn external(inner: Arc<dyn ExternalEmbed>) -> Result<Self> {
        let dim = inner.dim();
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(TextEmbedder {
            dim,
            backend: EmbedBackend::External(inner),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        embed_text(text, self)
    }
}

/// Embeds `text`. The hash backend hashes word unigrams and bigrams into
/// signed buckets and L2-normalizes; numbers are bucketed by order of
/// magnitude first so "12" and "15" share a feature.
pub fn embed_text(text: &str, embedder: &TextEmbedder) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::Precondition("cannot embed empty text".into()));
    }
    let mut v = match &embedder.backend {
        EmbedBackend::Hash { seed } => hash_features(text, embedder.dim, *seed),
        EmbedBackend::External(inner) => {
            let v = inner.embed(text)?;
            if v.len() != embedder.dim {
                return Err(Error::shape("external embedding", embedder.dim, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("external embedding has non-finite entries".into()));
            }
            v
        }
    };
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Every feature cancelled out; fall back to a single bucket picked by the raw text.
        let h = hash_with_seed(0, text);
        v[(h % embedder.dim as u64) as usize] = 1.0;
        return Ok(v);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

fn hash_with_seed(seed: u64, s: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write(s.as_bytes());
    h.finish()
}

fn normalize_token(t: &str) -> String {
    if !is_numeric(t) {
        return t.to_string();
    }
    if let Some(p) = t.strip_suffix('%') {
        let pct: f64 = p.parse().unwrap_or(0.0);
        return format!("<pct:{}>", (pct / 10.0).floor().clamp(0.0, 10.0) as i64);
    }
    let x: f64 = t.parse().unwrap_or(0.0);
    if x == 0.0 {
        "<num:zero>".to_string()
    } else {
        format!("<num:{}>", x.abs().log10().floor().clamp(-9.0, 12.0) as i64)
    }
}

fn hash_features(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let tokens: Vec<String> = tokenize(text).iter().map(|t| normalize_token(t)).collect();
    let mut v = vec![0.0; dim];
    let mut add = |feature: &str| {
        let h = hash_with_seed(seed, feature);
        let sign = if hash_with_seed(seed ^ 0x9e37_79b9_7f4a_7c15, feature) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        v[(h % dim as u64) as usize] += sign;
    };
    for t in &tokens {
        add(t);
    }
    for w in tokens.windows(2) {
        add(&format!("{} {}", w[0], w[1]));
    }
    v
}
