//! Farthest feature sampling: greedy max-min selection of mutually distant
//! styles.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{style_distance, StyleVector};

/// Largest corpus [`maxmin_oracle`] accepts.
pub const ORACLE_MAX_N: usize = 12;

/// The K selected reference styles.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDomainSet {
    pub indices: Vec<usize>,
    pub styles: Vec<StyleVector>,
}

impl BaseDomainSet {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// Look the selected indices up in `corpus`.
    pub fn from_indices(corpus: &[StyleVector], indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("base domain set must not be empty"));
        }
        let mut seen = vec![false; corpus.len()];
        for &i in &indices {
            if i >= corpus.len() {
                return Err(Error::param(format!(
                    "base index {i} outside corpus of {}",
                    corpus.len()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::param(format!("duplicate base index {i}")));
            }
        }
        let styles = indices.iter().map(|&i| corpus[i].clone()).collect();
        Ok(BaseDomainSet { indices, styles })
    }
}

/// How the first element is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Index(usize),
    /// Uniform draw over the corpus from a seeded generator.
    Random(u64),
}

impl Start {
    pub fn resolve(self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::param("empty corpus"));
        }
        match self {
            Start::Index(i) if i < n => Ok(i),
            Start::Index(i) => Err(Error::param(format!("start index {i} outside corpus of {n}"))),
            Start::Random(seed) => Ok(ChaCha8Rng::seed_from_u64(seed).random_range(0..n)),
        }
    }
}

impl FromStr for Start {
    type Err = Error;

    /// Accepts `<index>` or `random:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("start must be an index or random:SEED, got `{s}`"));
        match s.strip_prefix("random:") {
            Some(seed) => seed.parse().map(Start::Random).map_err(|_| bad()),
            None => s.parse().map(Start::Index).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Start::Index(i) => write!(f, "{i}"),
            Start::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

/// Incremental selection state: the distance from every corpus element to
/// the selected set, folded with `min` as elements are added.
#[derive(Debug, Clone)]
pub struct FfsState<'a> {
    styles: &'a [StyleVector],
    min_dist: Vec<f64>,
    selected: Vec<usize>,
    taken: Vec<bool>,
    trace: Vec<f64>,
}

impl<'a> FfsState<'a> {
    pub fn new(styles: &'a [StyleVector], start: usize) -> Result<Self> {
        if styles.is_empty() {
            return Err(Error::param("empty corpus"));
        }
        if start >= styles.len() {
            return Err(Error::param(format!(
                "start index {start} outside corpus of {}",
                styles.len()
            )));
        }
        let c = styles[0].channels();
        if styles.iter().any(|s| s.channels() != c) {
            return Err(Error::param("corpus styles have differing channel counts"));
        }
        let mut state = FfsState {
            styles,
            min_dist: vec![f64::INFINITY; styles.len()],
            selected: Vec::new(),
            taken: vec![false; styles.len()],
            trace: Vec::new(),
        };
        state.push(start);
        Ok(state)
    }

    fn push(&mut self, idx: usize) {
        self.selected.push(idx);
        self.taken[idx] = true;
        let newest = &self.styles[idx];
        for (d, s) in self.min_dist.iter_mut().zip(self.styles) {
            // Channel counts were validated in `new`.
            let dist = style_distance(s, newest).expect("uniform channel count");
            if dist < *d {
                *d = dist;
            }
        }
    }

    /// Add the unselected element farthest from the selected set (lowest
    /// index on ties). Returns `None` once the corpus is exhausted.
    pub fn step(&mut self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in self.min_dist.iter().enumerate() {
            if self.taken[j] {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((j, d));
            }
        }
        let (j, d) = best?;
        self.trace.push(d);
        self.push(j);
        Some(j)
    }

    pub fn min_dist(&self) -> &[f64] {
        &self.min_dist
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Max-min distance at which each element after the start was picked.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }
}

/// Pick `k` indices by farthest-point sampling over style distance.
pub fn ffs_select(styles: &[StyleVector], k: usize, start: Start) -> Result<BaseDomainSet> {
    Ok(ffs_run(styles, k, start)?.0)
}

/// [`ffs_select`] plus the per-pick max-min distance trace.
pub fn ffs_run(styles: &[StyleVector], k: usize, start: Start) -> Result<(BaseDomainSet, Vec<f64>)> {
    check_k(styles, k)?;
    let start = start.resolve(styles.len())?;
    let mut state = FfsState::new(styles, start)?;
    while state.selected().len() < k {
        state.step().expect("k <= N leaves candidates");
    }
    let trace = state.trace().to_vec();
    let base = BaseDomainSet::from_indices(styles, state.selected().to_vec())?;
    Ok((base, trace))
}

fn check_k(styles: &[StyleVector], k: usize) -> Result<()> {
    if styles.is_empty() {
        return Err(Error::param("empty corpus"));
    }
    if k == 0 || k > styles.len() {
        return Err(Error::param(format!("k must be in 1..={}, got {k}", styles.len())));
    }
    Ok(())
}

/// Reference implementation recomputing every distance to the whole selected
/// set from scratch at each step. Only for small corpora.
pub fn maxmin_oracle(styles: &[StyleVector], k: usize, start: usize) -> Result<BaseDomainSet> {
    if styles.len() > ORACLE_MAX_N {
        return Err(Error::param(format!(
            "oracle limited to {ORACLE_MAX_N} styles, got {}",
            styles.len()
        )));
    }
    check_k(styles, k)?;
    if start >= styles.len() {
        return Err(Error::param("start index outside corpus"));
    }
    let mut selected = vec![start];
    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..styles.len()).filter(|j| !selected.contains(j)) {
            let mut nearest = f64::INFINITY;
            for &s in &selected {
                nearest = nearest.min(style_distance(&styles[j], &styles[s])?);
            }
            match best {
                Some((_, d)) if nearest <= d => {}
                _ => best = Some((j, nearest)),
            }
        }
        selected.push(best.expect("k <= N").0);
    }
    BaseDomainSet::from_indices(styles, selected)
}
