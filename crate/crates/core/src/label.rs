//! Soft domain labels and the cross-entropy between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOL: f64 = 1e-6;

/// A probability vector over K domains (or classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SoftDomainLabel {
    probs: Vec<f64>,
}

impl SoftDomainLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::param("label must have at least one entry"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("label entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::param(format!("label sums to {sum}, not 1")));
        }
        Ok(SoftDomainLabel { probs })
    }

    pub fn one_hot(index: usize, k: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::param(format!("index {index} outside {k} classes")));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Ok(SoftDomainLabel { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("label must have at least one entry"));
        }
        Ok(SoftDomainLabel {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Swap two coordinates.
    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut probs = self.probs.clone();
        probs.swap(a, b);
        SoftDomainLabel { probs }
    }
}

impl TryFrom<Vec<f64>> for SoftDomainLabel {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SoftDomainLabel::new(v)
    }
}

impl From<SoftDomainLabel> for Vec<f64> {
    fn from(l: SoftDomainLabel) -> Self {
        l.probs
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `−Σ target[k] · ln(max(probs[k], 1e-12))`.
pub fn cross_entropy(probs: &[f64], target: &[f64]) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::param(format!(
            "prediction has {} entries, target has {}",
            probs.len(),
            target.len()
        )));
    }
    Ok(-probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
