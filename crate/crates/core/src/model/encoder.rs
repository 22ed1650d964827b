//! Forward and backward passes of the dual-path encoder.
//!
//! Each branch computes `Z = Â·relu(Â·X·W1 + b1)·W2 + b2 + X·Wθ + bθ` with
//! `Â = D^-1/2 (A + I) D^-1/2`. A branch output is fused with the
//! original-summary branch by a softmax over mean-pooled attention scores, and
//! the centre row of the fused matrix feeds a logistic head.

use ndarray::{Array1, Array2, Axis};

use super::params::{BranchParams, DualPathParams};
use crate::error::{Error, Result};
use crate::subgraph::Subgraph;

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRole {
    Disc,
    Resi,
    Orig,
}

/// Per-node input features over a subgraph's node ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub matrix: Array2<f64>,
    pub role: FeatureRole,
}

/// Symmetric-normalized adjacency with self-loops.
pub fn normalized_adjacency(adjacency: &Array2<f64>) -> Array2<f64> {
    let n = adjacency.nrows();
    let mut a = adjacency.clone();
    for i in 0..n {
        a[[i, i]] += 1.0;
    }
    let inv_sqrt: Array1<f64> = a.sum_axis(Axis(1)).mapv(|d| 1.0 / d.sqrt());
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

pub(crate) struct BranchCache {
    p1: Array2<f64>,
    u1: Array2<f64>,
    p2: Array2<f64>,
    pub(crate) z: Array2<f64>,
}

fn check_features(x: &Array2<f64>, a_hat: &Array2<f64>, p: &BranchParams) -> Result<()> {
    if a_hat.nrows() != a_hat.ncols() {
        return Err(Error::shape("adjacency", "square", format!("{:?}", a_hat.dim())));
    }
    if x.nrows() != a_hat.nrows() {
        return Err(Error::shape("features (rows)", a_hat.nrows(), x.nrows()));
    }
    if x.ncols() != p.w1.nrows() {
        return Err(Error::shape("features (columns)", p.w1.nrows(), x.ncols()));
    }
    Ok(())
}

pub(crate) fn branch_forward(p: &BranchParams, x: &Array2<f64>, a_hat: &Array2<f64>) -> BranchCache {
    let p1 = a_hat.dot(x);
    let u1 = p1.dot(&p.w1) + &p.b1;
    let h1 = u1.mapv(|v| v.max(0.0));
    let p2 = a_hat.dot(&h1);
    let z = p2.dot(&p.w2) + &p.b2 + x.dot(&p.w_theta) + &p.b_theta;
    BranchCache { p1, u1, p2, z }
}

/// Accumulates parameter gradients of one branch given `dL/dZ`.
pub(crate) fn branch_backward(
    p: &BranchParams,
    x: &Array2<f64>,
    a_hat: &Array2<f64>,
    cache: &BranchCache,
    dz: &Array2<f64>,
    grad: &mut BranchParams,
) {
    let db = dz.sum_axis(Axis(0));
    grad.w2 += &cache.p2.t().dot(dz);
    grad.b2 += &db;
    grad.w_theta += &x.t().dot(dz);
    grad.b_theta += &db;
    let dp2 = dz.dot(&p.w2.t());
    // Â is symmetric.
    let dh1 = a_hat.dot(&dp2);
    let du1 = ndarray::Zip::from(&dh1)
        .and(&cache.u1)
        .map_collect(|&g, &u| if u > 0.0 { g } else { 0.0 });
    grad.w1 += &cache.p1.t().dot(&du1);
    grad.b1 += &du1.sum_axis(Axis(0));
}

/// Runs one branch over a subgraph. Disc and resi features go through the
/// summary branch, orig features through the original branch.
pub fn gnn_forward(features: &NodeFeatures, sub: &Subgraph, params: &DualPathParams) -> Result<Array2<f64>> {
    let a_hat = normalized_adjacency(&sub.adjacency());
    branch_output(features, &a_hat, params)
}

pub(crate) fn branch_params(params: &DualPathParams, role: FeatureRole) -> &BranchParams {
    match role {
        FeatureRole::Disc | FeatureRole::Resi => &params.summary,
        FeatureRole::Orig => &params.original,
    }
}

pub fn branch_output(features: &NodeFeatures, a_hat: &Array2<f64>, params: &DualPathParams) -> Result<Array2<f64>> {
    let p = branch_params(params, features.role);
    check_features(&features.matrix, a_hat, p)?;
    Ok(branch_forward(p, &features.matrix, a_hat).z)
}

/// Result of fusing a branch with the original-summary branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub fused: Array2<f64>,
    pub w_branch: f64,
    pub w_orig: f64,
    pool_branch: Array1<f64>,
    pool_orig: Array1<f64>,
}

fn fuse(zb: &Array2<f64>, zo: &Array2<f64>, attn: &Array1<f64>, attn_bias: f64) -> Fusion {
    let pool_branch = zb.mean_axis(Axis(0)).expect("non-empty subgraph");
    let pool_orig = zo.mean_axis(Axis(0)).expect("non-empty subgraph");
    let s1 = attn.dot(&pool_branch) + attn_bias;
    let s2 = attn.dot(&pool_orig) + attn_bias;
    let m = s1.max(s2);
    let (e1, e2) = ((s1 - m).exp(), (s2 - m).exp());
    let (w_branch, w_orig) = (e1 / (e1 + e2), e2 / (e1 + e2));
    Fusion {
        fused: zb * w_branch + zo * w_orig,
        w_branch,
        w_orig,
        pool_branch,
        pool_orig,
    }
}

struct FusionGrad {
    dzb: Array2<f64>,
    dzo: Array2<f64>,
    dattn: Array1<f64>,
    dattn_bias: f64,
}

fn fuse_backward(zb: &Array2<f64>, zo: &Array2<f64>, f: &Fusion, attn: &Array1<f64>, ds: &Array2<f64>) -> FusionGrad {
    let n = zb.nrows() as f64;
    let dw1 = (ds * zb).sum();
    let dw2 = (ds * zo).sum();
    let mean = f.w_branch * dw1 + f.w_orig * dw2;
    let ds1 = f.w_branch * (dw1 - mean);
    let ds2 = f.w_orig * (dw2 - mean);
    let mut dzb = ds * f.w_branch;
    let mut dzo = ds * f.w_orig;
    let pool_grad_b = attn * (ds1 / n);
    let pool_grad_o = attn * (ds2 / n);
    dzb += &pool_grad_b;
    dzo += &pool_grad_o;
    FusionGrad {
        dzb,
        dzo,
        dattn: &f.pool_branch * ds1 + &f.pool_orig * ds2,
        dattn_bias: ds1 + ds2,
    }
}

/// Softmax-weighted fusion `S = w1·Z_branch + w2·Z_orig`, weights from
/// mean-pooled attention scores.
pub fn attention_fuse(z_branch: &Array2<f64>, z_orig: &Array2<f64>, params: &DualPathParams) -> Result<Fusion> {
    if z_branch.dim() != z_orig.dim() {
        return Err(Error::shape(
            "fusion operands",
            format!("{:?}", z_orig.dim()),
            format!("{:?}", z_branch.dim()),
        ));
    }
    if z_branch.ncols() != params.attn.len() {
        return Err(Error::shape("fusion width", params.attn.len(), z_branch.ncols()));
    }
    if z_branch.nrows() == 0 {
        return Err(Error::shape("fusion operands", "at least one row", 0));
    }
    Ok(fuse(z_branch, z_orig, &params.attn, params.attn_bias))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn head_logit(fused: &Array2<f64>, center: usize, params: &DualPathParams) -> f64 {
    params.fc.dot(&fused.row(center)) + params.fc_bias
}

/// Fraud probability of the node at row `center`.
pub fn predict_center(fused: &Array2<f64>, center: usize, params: &DualPathParams) -> Result<f64> {
    if center >= fused.nrows() {
        return Err(Error::shape("centre row", format!("< {}", fused.nrows()), center));
    }
    if fused.ncols() != params.fc.len() {
        return Err(Error::shape("head input", params.fc.len(), fused.ncols()));
    }
    Ok(sigmoid(head_logit(fused, center, params)))
}

/// Tri-view loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub resi: f64,
    pub orth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { resi: 0.05, orth: 0.3 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.resi.is_nan() || self.orth.is_nan() || self.resi < 0.0 || self.orth < 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got resi={} orth={}",
                self.resi, self.orth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    /// Clamped discriminative probability the loss was computed from.
    pub p_disc: f64,
    pub disc: f64,
    pub resi: f64,
    pub orth: f64,
}

fn xlogx_ratio(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / 0.5).ln()
    }
}

/// Cross-entropy on the discriminative prediction, KL-to-uniform on the
/// residual prediction, and the squared dot product of the two centre
/// representations.
pub fn triview_loss(
    p_disc: f64,
    p_resi: f64,
    s_disc: &[f64],
    s_resi: &[f64],
    label: f64,
    weights: LossWeights,
) -> Result<LossParts> {
    weights.validate()?;
    if s_disc.len() != s_resi.len() {
        return Err(Error::shape("residual representation", s_disc.len(), s_resi.len()));
    }
    let pd = p_disc.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let pr = p_resi.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let disc = -(label * pd.ln() + (1.0 - label) * (1.0 - pd).ln());
    let resi = (xlogx_ratio(pr) + xlogx_ratio(1.0 - pr)).max(0.0);
    let dot: f64 = s_disc.iter().zip(s_resi).map(|(a, b)| a * b).sum();
    let orth = dot * dot;
    Ok(LossParts {
        total: disc + weights.resi * resi + weights.orth * orth,
        p_disc: pd,
        disc,
        resi,
        orth,
    })
}

/// Inputs of one training or evaluation sample: three feature matrices over the
/// same subgraph and its normalized adjacency.
#[derive(Debug, Clone)]
pub struct SampleInputs {
    pub a_hat: Array2<f64>,
    pub disc: Array2<f64>,
    pub resi: Array2<f64>,
    pub orig: Array2<f64>,
    pub center: usize,
}

impl SampleInputs {
    fn check(&self, params: &DualPathParams) -> Result<()> {
        check_features(&self.disc, &self.a_hat, &params.summary)?;
        check_features(&self.resi, &self.a_hat, &params.summary)?;
        check_features(&self.orig, &self.a_hat, &params.original)?;
        if self.center >= self.a_hat.nrows() {
            return Err(Error::shape("centre row", format!("< {}", self.a_hat.nrows()), self.center));
        }
        Ok(())
    }
}

/// Full forward pass of one sample through both branches.
pub struct SampleForward {
    orig: BranchCache,
    disc: BranchCache,
    resi: BranchCache,
    pub fusion_disc: Fusion,
    pub fusion_resi: Fusion,
    pub logit_disc: f64,
    pub logit_resi: f64,
}

impl SampleForward {
    pub fn p_disc(&self) -> f64 {
        sigmoid(self.logit_disc)
    }

    pub fn p_resi(&self) -> f64 {
        sigmoid(self.logit_resi)
    }

    pub fn center_disc(&self, center: usize) -> Vec<f64> {
        self.fusion_disc.fused.row(center).to_vec()
    }

    pub fn center_resi(&self, center: usize) -> Vec<f64> {
        self.fusion_resi.fused.row(center).to_vec()
    }
}

pub fn forward_sample(params: &DualPathParams, x: &SampleInputs) -> Result<SampleForward> {
    x.check(params)?;
    let orig = branch_forward(&params.original, &x.orig, &x.a_hat);
    let disc = branch_forward(&params.summary, &x.disc, &x.a_hat);
    let resi = branch_forward(&params.summary, &x.resi, &x.a_hat);
    let fusion_disc = fuse(&disc.z, &orig.z, &params.attn, params.attn_bias);
    let fusion_resi = fuse(&resi.z, &orig.z, &params.attn, params.attn_bias);
    let logit_disc = head_logit(&fusion_disc.fused, x.center, params);
    let logit_resi = head_logit(&fusion_resi.fused, x.center, params);
    Ok(SampleForward {
        orig,
        disc,
        resi,
        fusion_disc,
        fusion_resi,
        logit_disc,
        logit_resi,
    })
}

/// Discriminative-path fraud probability: the inference path.
pub fn predict_sample(params: &DualPathParams, x: &SampleInputs) -> Result<f64> {
    x.check(params)?;
    let orig = branch_forward(&params.original, &x.orig, &x.a_hat);
    let disc = branch_forward(&params.summary, &x.disc, &x.a_hat);
    let fusion = fuse(&disc.z, &orig.z, &params.attn, params.attn_bias);
    Ok(sigmoid(head_logit(&fusion.fused, x.center, params)))
}

pub fn sample_loss(params: &DualPathParams, x: &SampleInputs, label: f64, weights: LossWeights) -> Result<LossParts> {
    let f = forward_sample(params, x)?;
    triview_loss(
        f.p_disc(),
        f.p_resi(),
        &f.center_disc(x.center),
        &f.center_resi(x.center),
        label,
        weights,
    )
}

/// Tri-view loss and its gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &DualPathParams,
    x: &SampleInputs,
    label: f64,
    weights: LossWeights,
) -> Result<(LossParts, DualPathParams)> {
    let f = forward_sample(params, x)?;
    let c = x.center;
    let sd = f.center_disc(c);
    let sr = f.center_resi(c);
    let (pd, pr) = (f.p_disc(), f.p_resi());
    let loss = triview_loss(pd, pr, &sd, &sr, label, weights)?;

    let unclamped = |p: f64| (PROB_EPS..=1.0 - PROB_EPS).contains(&p);
    // d(BCE)/d(logit) = p - y; d(KL to uniform)/d(logit) = logit * p(1-p).
    let dlogit_d = if unclamped(pd) { pd - label } else { 0.0 };
    let dlogit_r = if unclamped(pr) {
        weights.resi * f.logit_resi * pr * (1.0 - pr)
    } else {
        0.0
    };
    let dot: f64 = sd.iter().zip(&sr).map(|(a, b)| a * b).sum();
    let orth_scale = weights.orth * 2.0 * dot;

    let mut g = params.zeros_like();
    let sd_a = Array1::from(sd);
    let sr_a = Array1::from(sr);
    g.fc = &sd_a * dlogit_d + &sr_a * dlogit_r;
    g.fc_bias = dlogit_d + dlogit_r;

    let width = params.hidden_dim();
    let n = x.a_hat.nrows();
    let mut ds_d = Array2::zeros((n, width));
    let mut ds_r = Array2::zeros((n, width));
    ds_d.row_mut(c).assign(&(&params.fc * dlogit_d + &sr_a * orth_scale));
    ds_r.row_mut(c).assign(&(&params.fc * dlogit_r + &sd_a * orth_scale));

    let gd = fuse_backward(&f.disc.z, &f.orig.z, &f.fusion_disc, &params.attn, &ds_d);
    let gr = fuse_backward(&f.resi.z, &f.orig.z, &f.fusion_resi, &params.attn, &ds_r);
    g.attn = gd.dattn + gr.dattn;
    g.attn_bias = gd.dattn_bias + gr.dattn_bias;

    branch_backward(&params.summary, &x.disc, &x.a_hat, &f.disc, &gd.dzb, &mut g.summary);
    branch_backward(&params.summary, &x.resi, &x.a_hat, &f.resi, &gr.dzb, &mut g.summary);
    let dzo = gd.dzo + gr.dzo;
    branch_backward(&params.original, &x.orig, &x.a_hat, &f.orig, &dzo, &mut g.original);
    Ok((loss, g))
}
