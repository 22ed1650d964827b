//! Learnable parameters of the dual-path encoder and their checkpoint format.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "chainfraud.model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One branch: two aggregation layers plus a linear self-projection of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_theta: Array2<f64>,
    pub b_theta: Array1<f64>,
}

impl BranchParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        BranchParams {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w_theta: Array2::zeros((input, hidden)),
            b_theta: Array1::zeros(hidden),
        }
    }

    fn glorot(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        fill_glorot(&mut p.w1, rng);
        fill_glorot(&mut p.w2, rng);
        fill_glorot(&mut p.w_theta, rng);
        p
    }
}

fn fill_glorot(w: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (fan_in, fan_out) = w.dim();
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    w.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
}

/// Parameters of the summary branch (discriminative and residual inputs share
/// it), the original-summary branch, the fusion attention and the classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPathParams {
    pub summary: BranchParams,
    pub original: BranchParams,
    pub attn: Array1<f64>,
    pub attn_bias: f64,
    pub fc: Array1<f64>,
    pub fc_bias: f64,
}

impl DualPathParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        DualPathParams {
            summary: BranchParams::zeros(input, hidden),
            original: BranchParams::zeros(input, hidden),
            attn: Array1::zeros(hidden),
            attn_bias: 0.0,
            fc: Array1::zeros(hidden),
            fc_bias: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases, small random attention and head.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let summary = BranchParams::glorot(input, hidden, &mut rng);
        let original = BranchParams::glorot(input, hidden, &mut rng);
        let scale = 1.0 / (hidden as f64).sqrt();
        let attn = Array1::from_shape_fn(hidden, |_| rng.random_range(-scale..scale));
        let fc = Array1::from_shape_fn(hidden, |_| rng.random_range(-scale..scale));
        DualPathParams {
            summary,
            original,
            attn,
            attn_bias: 0.0,
            fc,
            fc_bias: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.summary.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.summary.w1.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out = Vec::with_capacity(16);
        for (prefix, b) in [("summary", &self.summary), ("original", &self.original)] {
            let names: [&'static str; 6] = if prefix == "summary" {
                ["summary.w1", "summary.b1", "summary.w2", "summary.b2", "summary.w_theta", "summary.b_theta"]
            } else {
                ["original.w1", "original.b1", "original.w2", "original.b2", "original.w_theta", "original.b_theta"]
            };
            let parts = [m(&b.w1), v(&b.b1), m(&b.w2), v(&b.b2), m(&b.w_theta), v(&b.b_theta)];
            for (name, (shape, data)) in names.into_iter().zip(parts) {
                out.push((name, shape, data));
            }
        }
        let (s, d) = v(&self.attn);
        out.push(("attn", s, d));
        out.push(("attn_bias", vec![1], std::slice::from_ref(&self.attn_bias)));
        let (s, d) = v(&self.fc);
        out.push(("fc", s, d));
        out.push(("fc_bias", vec![1], std::slice::from_ref(&self.fc_bias)));
        out
    }

    /// Mutable views in the same order as [`DualPathParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(16);
        for b in [&mut self.summary, &mut self.original] {
            out.push(b.w1.as_slice_mut().expect("standard layout"));
            out.push(b.b1.as_slice_mut().expect("standard layout"));
            out.push(b.w2.as_slice_mut().expect("standard layout"));
            out.push(b.b2.as_slice_mut().expect("standard layout"));
            out.push(b.w_theta.as_slice_mut().expect("standard layout"));
            out.push(b.b_theta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.attn.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut self.attn_bias));
        out.push(self.fc.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut self.fc_bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, _, d)| d.iter().copied()).collect()
    }

    /// `self += scale * other`, entrywise.
    pub fn add_scaled(&mut self, other: &DualPathParams, scale: f64) {
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += scale * b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over the exact bit patterns of every entry.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, shape, data) in self.tensors() {
            h.update(name.as_bytes());
            for s in shape {
                h.update((s as u64).to_le_bytes());
            }
            for x in data {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| NamedTensor {
                    name: name.to_string(),
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != MODEL_FORMAT || ck.version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format {}/{}",
                ck.format, ck.version
            )));
        }
        let mut params = Self::zeros(ck.input_dim, ck.hidden_dim);
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n.to_string(), s))
            .collect();
        if ck.tensors.len() != expected.len() {
            return Err(Error::shape("checkpoint tensor count", expected.len(), ck.tensors.len()));
        }
        for (((name, shape), t), dst) in expected.iter().zip(&ck.tensors).zip(params.tensors_mut()) {
            if &t.name != name {
                return Err(Error::Data(format!("checkpoint tensor {} where {name} expected", t.name)));
            }
            if &t.shape != shape || t.data.len() != dst.len() {
                return Err(Error::shape(name.clone(), format!("{shape:?}"), format!("{:?}", t.shape)));
            }
            dst.copy_from_slice(&t.data);
        }
        if !params.is_finite() {
            return Err(Error::Numeric("checkpoint contains non-finite parameters".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    /// Loads a checkpoint and checks it against the expected dimensions.
    pub fn load(path: &Path, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&crate::io::read_to_string(path)?)?;
        if ck.input_dim != input_dim || ck.hidden_dim != hidden_dim {
            return Err(Error::shape(
                "checkpoint dimensions",
                format!("{input_dim}x{hidden_dim}"),
                format!("{}x{}", ck.input_dim, ck.hidden_dim),
            ));
        }
        Self::from_checkpoint(&ck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
