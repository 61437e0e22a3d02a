#![allow(dead_code)]

use dsp_core::dal::{DalConfig, DalModel, DomainBranch};
use dsp_core::label::SoftDomainLabel;
use dsp_core::mlp::MlpClassifier;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_label(rng: &mut impl Rng, k: usize) -> SoftDomainLabel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    SoftDomainLabel::new(p).unwrap()
}

/// Norm-wise relative error between two gradient vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Central differences of `f` around `theta`.
pub fn central_diff(theta: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + FD_STEP;
            let up = f(&t);
            t[i] = orig - FD_STEP;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Soft-target cross-entropy written out directly.
pub fn ce_oracle(logits: &[f64], target: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    target.iter().zip(logits).map(|(t, z)| t * (lse - z)).sum()
}

/// Forward pass written independently of the library: affine, rectifier
/// between layers, raw logits out. Also returns every hidden
/// pre-activation.
pub fn mlp_logits(m: &MlpClassifier, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut pre = Vec::new();
    let n = m.layers().len();
    for (li, l) in m.layers().iter().enumerate() {
        let mut out = l.bias.clone();
        for (o, v) in out.iter_mut().enumerate() {
            for (i, xi) in h.iter().enumerate() {
                *v += l.weight[o * l.in_dim() + i] * xi;
            }
        }
        if li + 1 < n {
            pre.extend_from_slice(&out);
            h = out.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            h = out;
        }
    }
    (h, pre)
}

pub fn away_from_kinks(pre: &[f64]) -> bool {
    pre.iter().all(|v| v.abs() > KINK_MARGIN)
}

/// Tiny DAL model over `in_dim`-wide standardized inputs.
pub fn small_dal_model(seed: u64, n_classes: usize, k: usize) -> DalModel {
    let cfg = DalConfig {
        seed,
        embed_dim: 6,
        disc_hidden: 5,
        bank_channels: 2,
        ..Default::default()
    };
    DalModel::init(n_classes, k, &cfg, 3).unwrap()
}

pub struct DalBatch {
    pub inputs: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub labels: Vec<SoftDomainLabel>,
}

pub fn dal_batch(rng: &mut impl Rng, n: usize, in_dim: usize, n_classes: usize, k: usize) -> DalBatch {
    DalBatch {
        inputs: (0..n).map(|_| random_vec(rng, in_dim, 2.0)).collect(),
        classes: (0..n).map(|_| rng.random_range(0..n_classes)).collect(),
        labels: (0..n).map(|_| random_label(rng, k)).collect(),
    }
}

/// `(task_loss, dal_loss)` of `model` on a batch, from an independent
/// forward pass.
pub fn dal_losses_oracle(model: &DalModel, b: &DalBatch) -> (f64, f64) {
    let (mut task, mut dal) = (0.0, 0.0);
    for ((x, &c), l) in b.inputs.iter().zip(&b.classes).zip(&b.labels) {
        let d = &model.backbone.dense;
        let e: Vec<f64> = (0..d.out_dim())
            .map(|o| {
                let z = d.bias[o]
                    + (0..d.in_dim())
                        .map(|i| d.weight[o * d.in_dim() + i] * x[i])
                        .sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let (tl, _) = mlp_logits(&model.task, &e);
        let mut onehot = vec![0.0; tl.len()];
        onehot[c] = 1.0;
        task += ce_oracle(&tl, &onehot);
        let (dl, _) = mlp_logits(&model.disc, &e);
        dal += ce_oracle(&dl, l.probs());
    }
    let n = b.inputs.len() as f64;
    (task / n, dal / n)
}

/// Every pre-activation of the batch is clear of the rectifier kink.
pub fn dal_batch_clear(model: &DalModel, b: &DalBatch) -> bool {
    b.inputs.iter().all(|x| {
        let (z, e) = model.backbone.embed_input(x);
        away_from_kinks(&z) && away_from_kinks(&mlp_logits(&model.disc, &e).1)
    })
}

pub fn gradients(model: &DalModel, b: &DalBatch, branch: DomainBranch) -> dsp_core::dal::DalGrads {
    let xs: Vec<&[f64]> = b.inputs.iter().map(|v| v.as_slice()).collect();
    let ps: Vec<Option<&SoftDomainLabel>> = b.labels.iter().map(Some).collect();
    model.gradients(&xs, &b.classes, &ps, branch).unwrap().1
}
