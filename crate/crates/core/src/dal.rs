//! Domain-adversarial training through a gradient reversal layer.
//!
//! A fixed filter bank and pooled statistics feed one trainable rectified
//! dense layer (the backbone `g`). The embedding goes to a task head and,
//! through the reversal layer, to a domain discriminator `h` that is fitted
//! to soft pseudo labels. Backbone, head and discriminator are updated in a
//! single descent step per minibatch.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Standardizer;
use crate::error::{Error, Result};
use crate::features::{conv_features, style_of, FilterBank, STYLE_EPS};
use crate::image::Image;
use crate::label::{argmax, cross_entropy, SoftDomainLabel};
use crate::mlp::{Dense, DenseGrad, MlpClassifier, MlpGrad};
use crate::scg::derive_seed;
use crate::tensor::{read_model_file, write_model_file, Tensor};

/// Reversal coefficient used unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrlConfig {
    pub lambda: f64,
}

impl GrlConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(GrlConfig { lambda })
    }
}

impl Default for GrlConfig {
    fn default() -> Self {
        GrlConfig { lambda: DEFAULT_LAMBDA }
    }
}

/// Forward half of the reversal layer: the identity.
pub fn grl(x: &[f64], _lambda: f64) -> Vec<f64> {
    x.to_vec()
}

/// Backward half: `−λ · grad`.
pub fn grl_backward(grad: &[f64], lambda: f64) -> Vec<f64> {
    grad.iter().map(|g| -lambda * g).collect()
}

/// Soft-target cross-entropy between discriminator output and pseudo label.
pub fn dal_loss(discriminator_probs: &SoftDomainLabel, pseudo: &SoftDomainLabel) -> Result<f64> {
    cross_entropy(discriminator_probs.probs(), pseudo.probs())
}

/// How the discriminator branch is wired into training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainBranch {
    /// Discriminator trained on pseudo labels; backbone receives the
    /// reversed gradient.
    Adversarial(GrlConfig),
    /// Discriminator trained, but no gradient reaches the backbone.
    Detached,
    /// No discriminator updates at all; pseudo labels are not needed.
    Off,
}

impl DomainBranch {
    pub fn needs_labels(self) -> bool {
        !matches!(self, DomainBranch::Off)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier reached at the last epoch, decaying linearly
    /// from 1 at the first. 1 keeps the rate constant.
    #[serde(default = "one")]
    pub final_lr_ratio: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub disc_hidden: usize,
    pub bank_channels: usize,
    pub bank_kernel: usize,
    pub bank_stride: usize,
}

impl Default for DalConfig {
    fn default() -> Self {
        DalConfig {
            epochs: 30,
            learning_rate: 0.05,
            final_lr_ratio: 1.0,
            batch_size: 32,
            seed: 0,
            embed_dim: 32,
            disc_hidden: 64,
            bank_channels: 16,
            bank_kernel: 3,
            bank_stride: 1,
        }
    }
}

fn one() -> f64 {
    1.0
}

impl DalConfig {
    /// Learning rate used during epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * (1.0 - (1.0 - self.final_lr_ratio) * t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.embed_dim == 0 || self.disc_hidden == 0 {
            return Err(Error::param("epochs, batch size and layer widths must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_ratio) {
            return Err(Error::param("final_lr_ratio must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Fixed filter bank and statistics pooling, then a trainable rectified
/// projection to an `embed_dim` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackbone {
    pub bank: FilterBank,
    pub scaler: Standardizer,
    pub dense: Dense,
}

impl ToyBackbone {
    /// Unscaled pooled statistics of the bank responses.
    pub fn pooled(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(style_of(&conv_features(img, &self.bank)?, STYLE_EPS)?.to_vec())
    }

    /// Standardized pooled statistics; the input of the trainable layer.
    pub fn input(&self, img: &Image) -> Result<Vec<f64>> {
        self.scaler.apply(&self.pooled(img)?)
    }

    /// `(pre-activation, embedding)` for a standardized input.
    pub fn embed_input(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = self.dense.forward(x);
        let e = z.iter().map(|&v| v.max(0.0)).collect();
        (z, e)
    }

    pub fn embed(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(self.embed_input(&self.input(img)?).1)
    }
}

/// Backbone, task head and domain discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct DalModel {
    pub backbone: ToyBackbone,
    pub task: MlpClassifier,
    pub disc: MlpClassifier,
}

/// Gradients of every trainable parameter of a [`DalModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DalGrads {
    pub backbone: DenseGrad,
    pub task: MlpGrad,
    pub disc: MlpGrad,
}

impl DalGrads {
    fn zeros(model: &DalModel) -> Self {
        DalGrads {
            backbone: DenseGrad::zeros_like(&model.backbone.dense),
            task: model.task.grad_zeros(),
            disc: model.disc.grad_zeros(),
        }
    }
}

/// Mean losses over one minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DalBatchLoss {
    pub task_loss: f64,
    pub dal_loss: f64,
    pub total: f64,
}

impl DalBatchLoss {
    pub fn new(task_loss: f64, dal_loss: f64) -> Self {
        DalBatchLoss {
            task_loss,
            dal_loss,
            total: task_loss + dal_loss,
        }
    }
}

impl DalModel {
    /// Initialize all three networks. The backbone scaler is the identity
    /// until [`train_dal`] fits it.
    pub fn init(n_classes: usize, k: usize, cfg: &DalConfig, in_channels: usize) -> Result<Self> {
        cfg.validate()?;
        if n_classes < 2 || k == 0 {
            return Err(Error::param("need at least two classes and one domain"));
        }
        let bank = FilterBank::build(
            in_channels,
            cfg.bank_channels,
            cfg.bank_kernel,
            derive_seed(cfg.seed, 0, 0),
        )?
        .with_stride(cfg.bank_stride)?;
        let d = 2 * cfg.bank_channels;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
        let dense = Dense::init(d, cfg.embed_dim, &mut rng);
        let task = MlpClassifier::init(&[cfg.embed_dim, n_classes], &mut rng)?;
        let disc = MlpClassifier::init(&[cfg.embed_dim, cfg.disc_hidden, k], &mut rng)?;
        Ok(DalModel {
            backbone: ToyBackbone {
                bank,
                scaler: Standardizer::identity(d),
                dense,
            },
            task,
            disc,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.task.output_dim()
    }

    pub fn k(&self) -> usize {
        self.disc.output_dim()
    }

    /// Class probabilities for one image.
    pub fn predict(&self, img: &Image) -> Result<Vec<f64>> {
        self.task.predict(&self.backbone.embed(img)?)
    }

    /// Losses and gradients for a minibatch of standardized backbone inputs.
    ///
    /// Task-head gradients come from the task loss, discriminator gradients
    /// from the domain loss, and the backbone receives the task gradient plus
    /// the domain gradient passed through [`grl_backward`] (or nothing from
    /// the domain branch when it is detached or off). All terms are means
    /// over the batch.
    pub fn gradients(
        &self,
        inputs: &[&[f64]],
        classes: &[usize],
        pseudo: &[Option<&SoftDomainLabel>],
        branch: DomainBranch,
    ) -> Result<(DalBatchLoss, DalGrads)> {
        let n = inputs.len();
        if n == 0 || classes.len() != n || pseudo.len() != n {
            return Err(Error::param("minibatch slices must be non-empty and equally long"));
        }
        let mut grads = DalGrads::zeros(self);
        let (mut task_total, mut dal_total) = (0.0, 0.0);
        let n_classes = self.n_classes();
        for i in 0..n {
            let (z, e) = self.backbone.embed_input(inputs[i]);
            let mut target = vec![0.0; n_classes];
            target[classes[i]] = 1.0;
            let (tl, mut de, _) = self.task.loss_and_backward(&e, &target, &mut grads.task)?;
            task_total += tl;

            if branch.needs_labels() {
                let label = pseudo[i].ok_or_else(|| Error::param("missing pseudo label"))?;
                let (dl, de_disc, _) = self
                    .disc
                    .loss_and_backward(&grl(&e, 0.0), label.probs(), &mut grads.disc)?;
                dal_total += dl;
                if let DomainBranch::Adversarial(g) = branch {
                    for (a, b) in de.iter_mut().zip(grl_backward(&de_disc, g.lambda)) {
                        *a += b;
                    }
                }
            }

            let dz: Vec<f64> = de
                .iter()
                .zip(&z)
                .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                .collect();
            self.backbone.dense.backward(inputs[i], &dz, &mut grads.backbone);
        }
        let inv = 1.0 / n as f64;
        for g in grads
            .backbone
            .weight
            .iter_mut()
            .chain(grads.backbone.bias.iter_mut())
            .chain(
                grads
                    .task
                    .layers
                    .iter_mut()
                    .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut())),
            )
            .chain(
                grads
                    .disc
                    .layers
                    .iter_mut()
                    .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut())),
            )
        {
            *g *= inv;
        }
        Ok((DalBatchLoss::new(task_total * inv, dal_total * inv), grads))
    }

    fn sgd_step(&mut self, grads: &DalGrads, lr: f64, branch: DomainBranch) {
        self.backbone.dense.sgd_step(&grads.backbone, lr, 1.0);
        self.task.sgd_step(&grads.task, lr, 1.0);
        if branch.needs_labels() {
            self.disc.sgd_step(&grads.disc, lr, 1.0);
        }
    }

    /// Write `backbone.model`, `task.model` and `disc.model` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let b = &self.backbone;
        let header = BackboneHeader {
            format: BACKBONE_FORMAT.into(),
            cin: b.bank.cin(),
            cout: b.bank.cout(),
            kernel_size: b.bank.kernel_size(),
            stride: b.bank.stride(),
            bank_seed: b.bank.seed(),
            embed_dim: b.dense.out_dim(),
        };
        let kk = b.bank.kernel_size();
        write_model_file(
            dir.join("backbone.model"),
            &header,
            &[
                Tensor::from_f64(vec![b.bank.cout(), b.bank.cin(), kk, kk], b.bank.kernels())?,
                Tensor::from_f64(vec![b.scaler.dim()], &b.scaler.mean)?,
                Tensor::from_f64(vec![b.scaler.dim()], &b.scaler.scale)?,
                Tensor::from_f64(vec![b.dense.out_dim(), b.dense.in_dim()], &b.dense.weight)?,
                Tensor::from_f64(vec![b.dense.out_dim()], &b.dense.bias)?,
            ],
        )?;
        save_mlp(dir.join("task.model"), &self.task)?;
        save_mlp(dir.join("disc.model"), &self.disc)
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (h, t): (BackboneHeader, Vec<Tensor>) = read_model_file(dir.join("backbone.model"))?;
        if h.format != BACKBONE_FORMAT || t.len() != 5 {
            return Err(Error::format("backbone model", "unexpected header or tensor count"));
        }
        let d = 2 * h.cout;
        let bank = FilterBank::from_kernels(h.cin, h.cout, h.kernel_size, h.stride, t[0].to_f64())?;
        let scaler = Standardizer {
            mean: t[1].to_f64(),
            scale: t[2].to_f64(),
        };
        if scaler.mean.len() != d || scaler.scale.len() != d {
            return Err(Error::format("backbone model", "scaler width mismatch"));
        }
        let dense = Dense::from_parts(d, h.embed_dim, t[3].to_f64(), t[4].to_f64())?;
        Ok(DalModel {
            backbone: ToyBackbone { bank, scaler, dense },
            task: load_mlp(dir.join("task.model"))?,
            disc: load_mlp(dir.join("disc.model"))?,
        })
    }
}

const BACKBONE_FORMAT: &str = "dsp-toy-backbone/1";
const MLP_FORMAT: &str = "dsp-mlp/1";

#[derive(Serialize, Deserialize)]
struct BackboneHeader {
    format: String,
    cin: usize,
    cout: usize,
    kernel_size: usize,
    stride: usize,
    bank_seed: u64,
    embed_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct MlpHeader {
    format: String,
    layer_sizes: Vec<usize>,
}

fn save_mlp(path: impl AsRef<Path>, m: &MlpClassifier) -> Result<()> {
    let mut tensors = Vec::new();
    for l in m.layers() {
        tensors.push(Tensor::from_f64(vec![l.out_dim(), l.in_dim()], &l.weight)?);
        tensors.push(Tensor::from_f64(vec![l.out_dim()], &l.bias)?);
    }
    write_model_file(
        path,
        &MlpHeader {
            format: MLP_FORMAT.into(),
            layer_sizes: m.sizes(),
        },
        &tensors,
    )
}

fn load_mlp(path: impl AsRef<Path>) -> Result<MlpClassifier> {
    let (h, t): (MlpHeader, Vec<Tensor>) = read_model_file(path)?;
    if h.format != MLP_FORMAT || h.layer_sizes.len() < 2 || t.len() != 2 * (h.layer_sizes.len() - 1) {
        return Err(Error::format("mlp model", "unexpected header or tensor count"));
    }
    let layers = h
        .layer_sizes
        .windows(2)
        .zip(t.chunks_exact(2))
        .map(|(w, p)| Dense::from_parts(w[0], w[1], p[0].to_f64(), p[1].to_f64()))
        .collect::<Result<Vec<_>>>()?;
    MlpClassifier::from_layers(layers)
}

/// One training image with its task class and optional pseudo domain label.
#[derive(Debug, Clone, PartialEq)]
pub struct DalSample {
    pub image: Image,
    pub class: usize,
    pub pseudo: Option<SoftDomainLabel>,
}

/// A labelled image for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub class: usize,
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean minibatch task loss during the epoch.
    pub task_loss: f64,
    /// Mean minibatch domain loss during the epoch (0 when the branch is off).
    pub dal_loss: f64,
    /// Discriminator argmax agreement with the pseudo-label argmax on the
    /// training set, with parameters frozen at the end of the epoch.
    pub disc_acc: f64,
    pub heldout_acc: Option<f64>,
}

/// `epoch,task_loss,dal_loss,disc_acc,heldout_acc` CSV; an absent held-out
/// accuracy is an empty field.
pub fn trace_csv(trace: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,task_loss,dal_loss,disc_acc,heldout_acc\n");
    for m in trace {
        let held = m.heldout_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{},{}", m.epoch, m.task_loss, m.dal_loss, m.disc_acc, held).unwrap();
    }
    s
}

/// The outcome of [`train_dal`].
#[derive(Debug, Clone)]
pub struct DalRun {
    pub model: DalModel,
    pub trace: Vec<EpochMetrics>,
}

/// Validate samples and return `(n_classes, k)`.
fn dataset_shape(dataset: &[DalSample], branch: DomainBranch) -> Result<(usize, Option<usize>)> {
    let first = dataset.first().ok_or_else(|| Error::param("empty training set"))?;
    let n_classes = dataset.iter().map(|s| s.class).max().unwrap() + 1;
    if dataset.iter().any(|s| !s.image.same_shape(&first.image)) {
        return Err(Error::param("training images differ in shape"));
    }
    let mut k = None;
    for s in dataset {
        match (&s.pseudo, k) {
            (Some(l), None) => k = Some(l.k()),
            (Some(l), Some(kk)) if l.k() != kk => {
                return Err(Error::param(format!(
                    "pseudo labels have inconsistent K ({} vs {kk})",
                    l.k()
                )))
            }
            (None, _) if branch.needs_labels() => {
                return Err(Error::param("domain branch enabled but a sample has no pseudo label"))
            }
            _ => {}
        }
    }
    Ok((n_classes.max(2), k))
}

/// Initialize a model for `dataset` and train it.
pub fn train_dal(
    dataset: &[DalSample],
    cfg: &DalConfig,
    branch: DomainBranch,
    heldout: Option<&[LabeledImage]>,
) -> Result<DalRun> {
    let (n_classes, k) = dataset_shape(dataset, branch)?;
    let model = DalModel::init(n_classes, k.unwrap_or(1), cfg, dataset[0].image.channels())?;
    train_dal_from(model, dataset, cfg, branch, heldout)
}

/// Train an existing model. The backbone scaler is refitted on `dataset`.
///
/// Epochs visit the samples in a seeded shuffled order; the generator is
/// independent of the branch, so runs differing only in `branch` see the
/// same minibatches.
pub fn train_dal_from(
    mut model: DalModel,
    dataset: &[DalSample],
    cfg: &DalConfig,
    branch: DomainBranch,
    heldout: Option<&[LabeledImage]>,
) -> Result<DalRun> {
    cfg.validate()?;
    let (n_classes, k) = dataset_shape(dataset, branch)?;
    if n_classes > model.n_classes() {
        return Err(Error::param("class index exceeds the task head width"));
    }
    if let Some(k) = k {
        if branch.needs_labels() && k != model.k() {
            return Err(Error::param("pseudo-label width does not match the discriminator"));
        }
    }
    if let DomainBranch::Adversarial(g) = branch {
        GrlConfig::new(g.lambda)?;
    }

    let pooled = dataset
        .iter()
        .map(|s| model.backbone.pooled(&s.image))
        .collect::<Result<Vec<_>>>()?;
    model.backbone.scaler = Standardizer::fit(&pooled)?;
    let inputs = pooled
        .iter()
        .map(|p| model.backbone.scaler.apply(p))
        .collect::<Result<Vec<_>>>()?;
    let heldout_inputs = heldout
        .map(|h| {
            h.iter()
                .map(|s| Ok((model.backbone.input(&s.image)?, s.class)))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, 0));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut task_sum, mut dal_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let cs: Vec<usize> = chunk.iter().map(|&i| dataset[i].class).collect();
            let ps: Vec<Option<&SoftDomainLabel>> = chunk.iter().map(|&i| dataset[i].pseudo.as_ref()).collect();
            let (loss, grads) = model.gradients(&xs, &cs, &ps, branch)?;
            model.sgd_step(&grads, lr, branch);
            task_sum += loss.task_loss;
            dal_sum += loss.dal_loss;
            batches += 1;
        }
        let disc_acc = if branch.needs_labels() {
            discriminator_accuracy(&model, &inputs, dataset)?
        } else {
            0.0
        };
        let heldout_acc = heldout_inputs
            .as_ref()
            .map(|h| accuracy_on_inputs(&model, h))
            .transpose()?;
        trace.push(EpochMetrics {
            epoch: epoch + 1,
            task_loss: task_sum / batches as f64,
            dal_loss: dal_sum / batches as f64,
            disc_acc,
            heldout_acc,
        });
    }
    Ok(DalRun { model, trace })
}

fn discriminator_accuracy(model: &DalModel, inputs: &[Vec<f64>], dataset: &[DalSample]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, s) in inputs.iter().zip(dataset) {
        let p = model.disc.predict(&model.backbone.embed_input(x).1)?;
        let label = s.pseudo.as_ref().ok_or_else(|| Error::param("missing pseudo label"))?;
        hits += usize::from(argmax(&p) == label.argmax());
    }
    Ok(hits as f64 / inputs.len() as f64)
}

fn accuracy_on_inputs(model: &DalModel, data: &[(Vec<f64>, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::param("cannot evaluate on an empty set"));
    }
    let mut hits = 0usize;
    for (x, c) in data {
        let p = model.task.predict(&model.backbone.embed_input(x).1)?;
        hits += usize::from(argmax(&p) == *c);
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Fraction of held-out images whose argmax class prediction is correct.
pub fn evaluate(model: &DalModel, heldout: &[LabeledImage]) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::param("cannot evaluate on an empty set"));
    }
    let mut hits = 0usize;
    for s in heldout {
        hits += usize::from(argmax(&model.predict(&s.image)?) == s.class);
    }
    Ok(hits as f64 / heldout.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grl_contract() {
        let x = [1.5, -2.0, 0.0];
        for lambda in [0.0, 0.7, 1.0, 3.0] {
            assert_eq!(grl(&x, lambda), x.to_vec());
        }
        assert_eq!(grl_backward(&[1.0, -2.0], 0.7), vec![-0.7, 1.4]);
        assert!(grl_backward(&[1.0, -2.0], 0.0).iter().all(|&g| g == 0.0));
        assert!(GrlConfig::new(-0.1).is_err());
        assert_eq!(GrlConfig::default().lambda, 0.7);
    }

    #[test]
    fn dal_loss_cases() {
        let u = SoftDomainLabel::uniform(5).unwrap();
        assert!((dal_loss(&u, &u).unwrap() - 5f64.ln()).abs() < 1e-12);
        let p = SoftDomainLabel::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert!((dal_loss(&p, &p).unwrap() - p.entropy()).abs() < 1e-9);
        assert!(dal_loss(&p, &u).is_err());
    }

    #[test]
    fn batch_loss_total() {
        let l = DalBatchLoss::new(0.25, 1.5);
        assert_eq!(l.total, 1.75);
    }

    #[test]
    fn trace_format() {
        let t = [EpochMetrics {
            epoch: 1,
            task_loss: 0.5,
            dal_loss: 1.25,
            disc_acc: 0.75,
            heldout_acc: None,
        }];
        assert_eq!(
            trace_csv(&t),
            "epoch,task_loss,dal_loss,disc_acc,heldout_acc\n1,0.5,1.25,0.75,\n"
        );
    }

    #[test]
    fn evaluate_rejects_empty() {
        let m = DalModel::init(3, 2, &DalConfig::default(), 3).unwrap();
        assert!(evaluate(&m, &[]).is_err());
    }
}
