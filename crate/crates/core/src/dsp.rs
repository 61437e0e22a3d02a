//! Domain classifier training and soft pseudo-label assignment.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adain::Stylized;
use crate::error::{Error, Result};
use crate::features::{style_of, FeatureMap, StyleVector, STYLE_EPS};
use crate::label::SoftDomainLabel;
use crate::mlp::{Dense, ForwardCache, MlpClassifier};
use crate::tensor::{read_model_file, write_model_file, Tensor};

/// Iteration count used by the full pipeline.
pub const DEFAULT_ITERATIONS: usize = 800;
/// Label width of the full pipeline.
pub const DEFAULT_BASE_DOMAINS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: DEFAULT_ITERATIONS,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            hidden: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::param("batch size and hidden width must be positive"));
        }
        Ok(())
    }
}

/// Per-feature affine standardization, fixed after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Features whose spread is below `1e-8` are centred but not scaled.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::param("cannot fit on zero rows"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::param("rows have differing lengths"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::param(format!(
                "input has {} features, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// Forward pass returning the softmax output as a label.
pub fn mlp_forward(m: &MlpClassifier, x: &[f64]) -> Result<(SoftDomainLabel, ForwardCache)> {
    let cache = m.forward(x)?;
    let label = SoftDomainLabel::new(cache.probs.clone())?;
    Ok((label, cache))
}

/// The trained label assignment function: standardize the pooled style
/// statistics, then classify.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainClassifier {
    pub scaler: Standardizer,
    pub mlp: MlpClassifier,
    pub seed: u64,
    pub iterations: usize,
}

/// Mean minibatch loss at every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub batch_losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl DomainClassifier {
    pub fn k(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn classify_vector(&self, pooled: &[f64]) -> Result<SoftDomainLabel> {
        Ok(mlp_forward(&self.mlp, &self.scaler.apply(pooled)?)?.0)
    }

    pub fn classify_style(&self, style: &StyleVector) -> Result<SoftDomainLabel> {
        self.classify_vector(&style.to_vec())
    }

    /// Mean one-hot cross-entropy over a labelled set.
    pub fn mean_loss(&self, inputs: &[Vec<f64>], tags: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &t) in inputs.iter().zip(tags) {
            let p = self.classify_vector(x)?;
            total -= p.probs()[t].max(crate::label::PROB_FLOOR).ln();
        }
        Ok(total / inputs.len() as f64)
    }

    pub fn accuracy(&self, inputs: &[Vec<f64>], tags: &[usize]) -> Result<f64> {
        let mut hits = 0usize;
        for (x, &t) in inputs.iter().zip(tags) {
            hits += usize::from(self.classify_vector(x)?.argmax() == t);
        }
        Ok(hits as f64 / inputs.len() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            layer_sizes: self.mlp.sizes(),
            seed: self.seed,
            iterations: self.iterations,
        };
        let d = self.input_dim();
        let mut tensors = vec![
            Tensor::from_f64(vec![d], &self.scaler.mean)?,
            Tensor::from_f64(vec![d], &self.scaler.scale)?,
        ];
        for layer in self.mlp.layers() {
            tensors.push(Tensor::from_f64(vec![layer.out_dim(), layer.in_dim()], &layer.weight)?);
            tensors.push(Tensor::from_f64(vec![layer.out_dim()], &layer.bias)?);
        }
        write_model_file(path, &header, &tensors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, tensors): (ModelHeader, _) = read_model_file(path)?;
        if header.format != MODEL_FORMAT {
            return Err(Error::format(
                "model file",
                format!("unknown format `{}`", header.format),
            ));
        }
        let sizes = &header.layer_sizes;
        if sizes.len() < 2 || tensors.len() != 2 + 2 * (sizes.len() - 1) {
            return Err(Error::format("model file", "tensor count does not match layer sizes"));
        }
        let d = sizes[0];
        let expect = |t: &Tensor, dims: &[usize]| {
            if t.dims == dims {
                Ok(t.to_f64())
            } else {
                Err(Error::format(
                    "model file",
                    format!("tensor dims {:?}, expected {dims:?}", t.dims),
                ))
            }
        };
        let scaler = Standardizer {
            mean: expect(&tensors[0], &[d])?,
            scale: expect(&tensors[1], &[d])?,
        };
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let weight = expect(&tensors[2 + 2 * i], &[w[1], w[0]])?;
            let bias = expect(&tensors[3 + 2 * i], &[w[1]])?;
            layers.push(Dense::from_parts(w[0], w[1], weight, bias)?);
        }
        Ok(DomainClassifier {
            scaler,
            mlp: MlpClassifier::from_layers(layers)?,
            seed: header.seed,
            iterations: header.iterations,
        })
    }
}

const MODEL_FORMAT: &str = "dsp-domain-classifier/1";

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    layer_sizes: Vec<usize>,
    seed: u64,
    iterations: usize,
}

/// Pooled `mu ⧺ sigma` statistic of a feature map; the classifier's input.
pub fn pooled_input(fm: &FeatureMap) -> Result<Vec<f64>> {
    Ok(style_of(fm, STYLE_EPS)?.to_vec())
}

/// Train on stylized maps tagged with their base-domain index.
pub fn train_domain_classifier(stylized: &[Stylized], k: usize, cfg: &TrainConfig) -> Result<DomainClassifier> {
    let inputs = stylized
        .iter()
        .map(|s| pooled_input(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let tags: Vec<usize> = stylized.iter().map(|s| s.domain).collect();
    Ok(fit_domain_classifier(&inputs, &tags, k, cfg)?.0)
}

/// Seeded minibatch SGD on one-hot cross-entropy over pooled inputs.
///
/// Each iteration draws `batch_size` samples uniformly with replacement.
pub fn fit_domain_classifier(
    inputs: &[Vec<f64>],
    tags: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<(DomainClassifier, TrainLog)> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.len() != tags.len() {
        return Err(Error::param("need equally many (non-zero) inputs and tags"));
    }
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    let mut present = vec![false; k];
    for &t in tags {
        if t >= k {
            return Err(Error::param(format!("domain tag {t} outside 0..{k}")));
        }
        present[t] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::param(format!("no samples for domain {missing}")));
    }

    let scaler = Standardizer::fit(inputs)?;
    let scaled = inputs.iter().map(|x| scaler.apply(x)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<f64>> = (0..k)
        .map(|j| SoftDomainLabel::one_hot(j, k).map(Vec::from))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = MlpClassifier::init(&[scaler.dim(), cfg.hidden, k], &mut rng)?;
    let mut grads = mlp.grad_zeros();
    let mut batch_losses = Vec::with_capacity(cfg.iterations);
    let scale = 1.0 / cfg.batch_size as f64;

    let mut model = DomainClassifier {
        scaler,
        mlp: mlp.clone(),
        seed: cfg.seed,
        iterations: cfg.iterations,
    };
    let initial_loss = model.mean_loss(inputs, tags)?;

    for _ in 0..cfg.iterations {
        grads.clear();
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..scaled.len());
            let (l, _, _) = mlp.loss_and_backward(&scaled[i], &targets[tags[i]], &mut grads)?;
            loss += l;
        }
        mlp.sgd_step(&grads, cfg.learning_rate, scale);
        batch_losses.push(loss * scale);
    }
    model.mlp = mlp;
    let final_loss = model.mean_loss(inputs, tags)?;
    Ok((
        model,
        TrainLog {
            batch_losses,
            initial_loss,
            final_loss,
        },
    ))
}

/// Soft label of every feature map. No argmax is taken.
pub fn assign_labels(f: &DomainClassifier, features: &[FeatureMap]) -> Result<Vec<SoftDomainLabel>> {
    features
        .iter()
        .map(|fm| {
            if 2 * fm.channels() != f.input_dim() {
                return Err(Error::param(format!(
                    "feature map has {} channels, classifier expects {}",
                    fm.channels(),
                    f.input_dim() / 2
                )));
            }
            f.classify_vector(&pooled_input(fm)?)
        })
        .collect()
}

/// Environment label smoothing: `1 − ε` on the true domain, `ε / (k − 1)`
/// on every other.
pub fn els_labels(domain_index: usize, k: usize, epsilon: f64) -> Result<SoftDomainLabel> {
    if k < 2 {
        return Err(Error::param("label smoothing needs at least two domains"));
    }
    if domain_index >= k {
        return Err(Error::param(format!("domain {domain_index} outside 0..{k}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::param(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let off = epsilon / (k - 1) as f64;
    let mut probs = vec![off; k];
    probs[domain_index] = 1.0 - epsilon;
    SoftDomainLabel::new(probs)
}
