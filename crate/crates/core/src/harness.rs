//! End-to-end experiments on the synthetic fixture: dataset generation,
//! pseudo-label preprocessing, optional spectrum augmentation, adversarial
//! training and held-out evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adain::adain_transfer;
use crate::dal::{trace_csv, train_dal, DalConfig, DalSample, DomainBranch, EpochMetrics, GrlConfig, LabeledImage};
use crate::dsp::{els_labels, fit_domain_classifier, pooled_input, DomainClassifier, TrainConfig, TrainLog};
use crate::error::{Error, Result, StageExt};
use crate::features::{conv_features, style_distance, style_of, FilterBank, StyleVector, STYLE_EPS};
use crate::ffs::{ffs_run, BaseDomainSet, Start};
use crate::image::Image;
use crate::label::SoftDomainLabel;
use crate::scg::{augment, derive_seed, AlphaChoice, ScgAugmentConfig};
use crate::synth::{gen_dataset, DatasetConfig, SyntheticDataset, SyntheticImage};
use crate::tensor::Tensor;

/// Training recipe compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Task loss only.
    #[serde(rename = "deepall")]
    DeepAll,
    /// Adversarial branch on true domain tags.
    DannOnehot,
    /// Adversarial branch on smoothed true domain tags.
    DannEls,
    /// Adversarial branch on DSP pseudo labels.
    DannDsp,
    /// DSP pseudo labels on the spectrum-augmented corpus.
    DannDspScg,
    /// Spectrum-augmented corpus, task loss only.
    ScgOnly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DeepAll,
        Method::DannOnehot,
        Method::DannEls,
        Method::DannDsp,
        Method::DannDspScg,
        Method::ScgOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DeepAll => "deepall",
            Method::DannOnehot => "dann_onehot",
            Method::DannEls => "dann_els",
            Method::DannDsp => "dann_dsp",
            Method::DannDspScg => "dann_dsp_scg",
            Method::ScgOnly => "scg_only",
        }
    }

    pub fn uses_scg(self) -> bool {
        matches!(self, Method::DannDspScg | Method::ScgOnly)
    }

    pub fn uses_dsp(self) -> bool {
        matches!(self, Method::DannDsp | Method::DannDspScg)
    }

    pub fn adversarial(self) -> bool {
        !matches!(self, Method::DeepAll | Method::ScgOnly)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown method `{s}`")))
    }
}

/// Everything that determines one run. Missing keys in a config file take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,

    pub n_domains_train: usize,
    pub n_classes: usize,
    pub images_per_domain: usize,
    pub heldout_images: usize,
    pub image_size: usize,
    pub class_domain_bias: f64,
    pub contrast: f64,

    /// Number of base domains; also the pseudo-label width.
    pub k_base: usize,
    /// `N` or `random:SEED`.
    pub ffs_start: String,
    pub dsp_iterations: usize,
    pub dsp_learning_rate: f64,
    pub dsp_batch_size: usize,
    pub dsp_hidden: usize,
    pub style_channels: usize,
    pub style_kernel: usize,

    pub els_epsilon: f64,

    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub final_lr_ratio: f64,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub disc_hidden: usize,
    pub bank_channels: usize,
    pub bank_kernel: usize,

    pub scg_per_image: usize,
    /// `random` or a fixed number.
    pub scg_alpha: String,
    pub scg_beta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dal = DalConfig::default();
        let data = DatasetConfig::default();
        ExperimentConfig {
            method: Method::DannDsp,
            seed: 0,
            n_domains_train: data.n_domains_train,
            n_classes: data.n_classes,
            images_per_domain: data.images_per_domain,
            heldout_images: data.heldout_images,
            image_size: data.size,
            class_domain_bias: 0.6,
            contrast: 0.2,
            k_base: data.n_domains_train,
            ffs_start: "0".into(),
            dsp_iterations: crate::dsp::DEFAULT_ITERATIONS,
            dsp_learning_rate: 0.05,
            dsp_batch_size: 32,
            dsp_hidden: 64,
            style_channels: 64,
            style_kernel: 3,
            els_epsilon: 0.2,
            lambda: crate::dal::DEFAULT_LAMBDA,
            epochs: dal.epochs,
            learning_rate: dal.learning_rate,
            final_lr_ratio: 0.1,
            batch_size: dal.batch_size,
            embed_dim: dal.embed_dim,
            disc_hidden: dal.disc_hidden,
            bank_channels: dal.bank_channels,
            bank_kernel: dal.bank_kernel,
            scg_per_image: 1,
            scg_alpha: "0.3".into(),
            scg_beta: crate::scg::DEFAULT_BETA,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset_config().validate()?;
        if self.method.uses_dsp() && self.k_base < 2 {
            return Err(Error::param("DSP methods need k_base >= 2"));
        }
        self.ffs_start.parse::<Start>()?;
        if self.method.uses_scg() {
            self.scg_config()?;
            if self.scg_per_image == 0 {
                return Err(Error::param("scg_per_image must be positive for augmented methods"));
            }
        }
        self.dsp_train_config().validate()?;
        self.dal_config().validate()?;
        GrlConfig::new(self.lambda)?;
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_domains_train: self.n_domains_train,
            n_classes: self.n_classes,
            images_per_domain: self.images_per_domain,
            heldout_images: self.heldout_images,
            size: self.image_size,
            class_domain_bias: self.class_domain_bias,
            contrast: self.contrast,
            seed: self.seed,
        }
    }

    pub fn dsp_train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.dsp_iterations,
            learning_rate: self.dsp_learning_rate,
            batch_size: self.dsp_batch_size,
            seed: derive_seed(self.seed, 30, 0),
            hidden: self.dsp_hidden,
        }
    }

    /// Identical for every method of a seed, so methods share the
    /// initialization and minibatch order.
    pub fn dal_config(&self) -> DalConfig {
        DalConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            final_lr_ratio: self.final_lr_ratio,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, 20, 0),
            embed_dim: self.embed_dim,
            disc_hidden: self.disc_hidden,
            bank_channels: self.bank_channels,
            bank_kernel: self.bank_kernel,
            bank_stride: 1,
        }
    }

    pub fn scg_config(&self) -> Result<ScgAugmentConfig> {
        let cfg = ScgAugmentConfig {
            per_image: self.scg_per_image,
            alpha: self.scg_alpha.parse::<AlphaChoice>()?,
            beta: self.scg_beta,
            seed: derive_seed(self.seed, 40, 0),
        };
        if !(0.0..=1.0).contains(&cfg.beta) {
            return Err(Error::param(format!("scg_beta {} outside [0, 1]", cfg.beta)));
        }
        Ok(cfg)
    }

    pub fn style_bank(&self) -> Result<FilterBank> {
        FilterBank::build(3, self.style_channels, self.style_kernel, derive_seed(self.seed, 10, 0))
    }
}

/// Methods and seeds to sweep over a shared base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(flatten)]
    pub base: ExperimentConfig,
}

fn default_methods() -> Vec<Method> {
    vec![Method::DeepAll, Method::DannOnehot, Method::DannDsp]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            methods: default_methods(),
            seeds: default_seeds(),
            base: ExperimentConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &method in &self.methods {
                out.push(ExperimentConfig {
                    method,
                    seed,
                    ..self.base.clone()
                });
            }
        }
        out
    }
}

/// Mean entropy and the distribution of top probabilities of a label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub count: usize,
    pub mean_entropy: f64,
    pub min_entropy: f64,
    pub max_entropy: f64,
    pub mean_max_prob: f64,
    /// Counts of the top probability over ten equal bins of `[0, 1]`.
    pub max_prob_histogram: [usize; 10],
}

pub fn label_entropy_report(labels: &[SoftDomainLabel]) -> Result<EntropyReport> {
    if labels.is_empty() {
        return Err(Error::param("entropy report of an empty label set"));
    }
    let n = labels.len() as f64;
    let ent: Vec<f64> = labels.iter().map(SoftDomainLabel::entropy).collect();
    let mut hist = [0usize; 10];
    let mut max_sum = 0.0;
    for l in labels {
        let m = l.probs()[l.argmax()];
        max_sum += m;
        hist[((m * 10.0) as usize).min(9)] += 1;
    }
    Ok(EntropyReport {
        count: labels.len(),
        mean_entropy: ent.iter().sum::<f64>() / n,
        min_entropy: ent.iter().copied().fold(f64::INFINITY, f64::min),
        max_entropy: ent.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_max_prob: max_sum / n,
        max_prob_histogram: hist,
    })
}

/// The preprocessing stage: style extraction, base-domain sampling,
/// stylization, classifier training and label assignment.
#[derive(Debug, Clone)]
pub struct DspOutcome {
    pub styles: Vec<StyleVector>,
    pub base: BaseDomainSet,
    pub min_dist_trace: Vec<f64>,
    pub classifier: DomainClassifier,
    pub log: TrainLog,
    pub labels: Vec<SoftDomainLabel>,
}

/// Style vectors of `images` under `bank`.
pub fn corpus_styles(images: &[&Image], bank: &FilterBank) -> Result<Vec<StyleVector>> {
    images
        .iter()
        .map(|img| style_of(&conv_features(img, bank)?, STYLE_EPS))
        .collect()
}

/// Stylize every image towards every base style (image-major) and return
/// the pooled classifier inputs with their base-domain tags. Feature maps
/// are recomputed per image instead of being held for the whole corpus.
pub fn stylized_inputs(
    images: &[&Image],
    bank: &FilterBank,
    base: &BaseDomainSet,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut inputs = Vec::with_capacity(images.len() * base.k());
    let mut tags = Vec::with_capacity(images.len() * base.k());
    for img in images {
        let fm = conv_features(img, bank)?;
        for (k, target) in base.styles.iter().enumerate() {
            inputs.push(pooled_input(&adain_transfer(&fm, target, STYLE_EPS)?)?);
            tags.push(k);
        }
    }
    Ok((inputs, tags))
}

/// Run the preprocessing stage on `images`.
pub fn run_dsp(images: &[&Image], cfg: &ExperimentConfig) -> Result<DspOutcome> {
    let bank = cfg.style_bank().stage("extract")?;
    let styles = corpus_styles(images, &bank).stage("extract")?;
    let start: Start = cfg.ffs_start.parse().stage("ffs")?;
    let (base, min_dist_trace) = ffs_run(&styles, cfg.k_base, start).stage("ffs")?;
    let (inputs, tags) = stylized_inputs(images, &bank, &base).stage("stylize")?;
    let (classifier, log) =
        fit_domain_classifier(&inputs, &tags, cfg.k_base, &cfg.dsp_train_config()).stage("train_dsp")?;
    let labels = styles
        .iter()
        .map(|s| classifier.classify_style(s))
        .collect::<Result<Vec<_>>>()
        .stage("assign_labels")?;
    Ok(DspOutcome {
        styles,
        base,
        min_dist_trace,
        classifier,
        log,
        labels,
    })
}

/// Mean style of each true domain.
pub fn domain_mean_styles(styles: &[StyleVector], domains: &[usize], n_domains: usize) -> Result<Vec<StyleVector>> {
    let dim = styles
        .first()
        .map(|s| s.to_vec().len())
        .ok_or_else(|| Error::param("no styles"))?;
    let mut sums = vec![vec![0.0; dim]; n_domains];
    let mut counts = vec![0usize; n_domains];
    for (s, &d) in styles.iter().zip(domains) {
        if d >= n_domains {
            return Err(Error::param(format!("domain {d} outside 0..{n_domains}")));
        }
        for (a, v) in sums[d].iter_mut().zip(s.to_vec()) {
            *a += v;
        }
        counts[d] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                return Err(Error::param("a domain has no images"));
            }
            StyleVector::from_concat(&s.iter().map(|v| v / c as f64).collect::<Vec<_>>())
        })
        .collect()
}

/// For each base style, the index of the nearest true domain style.
pub fn nearest_domains(base: &[StyleVector], domain_styles: &[StyleVector]) -> Result<Vec<usize>> {
    base.iter()
        .map(|b| {
            let mut best = (f64::INFINITY, 0usize);
            for (d, s) in domain_styles.iter().enumerate() {
                let dist = style_distance(b, s)?;
                if dist < best.0 {
                    best = (dist, d);
                }
            }
            Ok(best.1)
        })
        .collect()
}

/// Whether `assignment` maps base domains one-to-one onto `n_domains` domains.
pub fn is_bijection(assignment: &[usize], n_domains: usize) -> bool {
    let mut seen = vec![false; n_domains];
    assignment.len() == n_domains
        && assignment
            .iter()
            .all(|&d| d < n_domains && !std::mem::replace(&mut seen[d], true))
}

/// Content-keyed store for intermediate files. The key of an artifact is
/// the SHA-256 of its stage name and the JSON of everything that determines
/// it; identical inputs therefore land on the same file, which is only
/// rewritten when its bytes differ.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ArtifactStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key<K: Serialize>(stage: &str, inputs: &K) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(inputs)?);
        Ok(hex::encode(h.finalize()))
    }

    pub fn path_for(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(format!("{stage}-{}.{ext}", &key[..16]))
    }

    /// Store `bytes`; returns the path.
    pub fn put<K: Serialize>(&self, stage: &str, inputs: &K, ext: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path_for(stage, &Self::key(stage, inputs)?, ext);
        let same = std::fs::read(&path).map(|old| old == bytes).unwrap_or(false);
        if !same {
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(path)
    }
}

/// `{"index": i, "probs": [...]}` lines.
pub fn labels_jsonl(labels: &[SoftDomainLabel]) -> String {
    let mut s = String::new();
    for (i, l) in labels.iter().enumerate() {
        let line = serde_json::json!({ "index": i, "probs": l.probs() });
        writeln!(s, "{line}").unwrap();
    }
    s
}

/// Parse `{"index": i, "probs": [...]}` lines; indices must run 0, 1, 2, ...
pub fn parse_labels_jsonl(text: &str) -> Result<Vec<SoftDomainLabel>> {
    #[derive(Deserialize)]
    struct Line {
        index: usize,
        probs: SoftDomainLabel,
    }
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: Line =
            serde_json::from_str(raw).map_err(|e| Error::format("labels jsonl", format!("line {}: {e}", n + 1)))?;
        if line.index != out.len() {
            return Err(Error::format(
                "labels jsonl",
                format!("line {}: index {} out of order", n + 1, line.index),
            ));
        }
        out.push(line.probs);
    }
    Ok(out)
}

/// Outcome of one (method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub heldout_accuracy: f64,
    pub trace: Vec<EpochMetrics>,
    /// Pseudo labels of the training corpus (DSP methods only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<SoftDomainLabel>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub base_indices: Option<Vec<usize>>,
    /// Nearest true domain of each base style.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub base_domains: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bijection: Option<bool>,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
}

/// Training corpus for `cfg.method`: the original images, plus spectrum
/// variants for augmented methods (originals first, then variants in image
/// order).
pub fn training_corpus(data: &SyntheticDataset, cfg: &ExperimentConfig) -> Result<Vec<SyntheticImage>> {
    let mut corpus = data.train.clone();
    if cfg.method.uses_scg() {
        let scg = cfg.scg_config()?;
        for (i, s) in data.train.iter().enumerate() {
            for image in augment(&s.image, i, &scg)? {
                corpus.push(SyntheticImage { image, ..*s });
            }
        }
    }
    Ok(corpus)
}

/// Run one configuration on an already generated dataset.
pub fn run_on_dataset(
    data: &SyntheticDataset,
    cfg: &ExperimentConfig,
    store: Option<&ArtifactStore>,
) -> Result<RunResult> {
    cfg.validate()?;
    let corpus = training_corpus(data, cfg).stage("scg_augment")?;
    let mut artifacts = Vec::new();
    let mut result = RunResult {
        method: cfg.method,
        seed: cfg.seed,
        heldout_accuracy: 0.0,
        trace: Vec::new(),
        labels: None,
        base_indices: None,
        base_domains: None,
        bijection: None,
        artifacts: Vec::new(),
    };

    let pseudo: Vec<Option<SoftDomainLabel>> = match cfg.method {
        Method::DeepAll | Method::ScgOnly => vec![None; corpus.len()],
        Method::DannOnehot => corpus
            .iter()
            .map(|s| SoftDomainLabel::one_hot(s.domain, cfg.n_domains_train).map(Some))
            .collect::<Result<_>>()
            .stage("labels")?,
        Method::DannEls => corpus
            .iter()
            .map(|s| els_labels(s.domain, cfg.n_domains_train, cfg.els_epsilon).map(Some))
            .collect::<Result<_>>()
            .stage("labels")?,
        Method::DannDsp | Method::DannDspScg => {
            let images: Vec<&Image> = corpus.iter().map(|s| &s.image).collect();
            let dsp = run_dsp(&images, cfg)?;
            let domains: Vec<usize> = corpus.iter().map(|s| s.domain).collect();
            let truth = domain_mean_styles(&dsp.styles, &domains, cfg.n_domains_train).stage("ffs")?;
            let nearest = nearest_domains(&dsp.base.styles, &truth)?;
            result.bijection = Some(is_bijection(&nearest, cfg.n_domains_train));
            result.base_domains = Some(nearest);
            result.base_indices = Some(dsp.base.indices.clone());
            if let Some(store) = store {
                artifacts.extend(write_dsp_artifacts(store, cfg, &dsp).stage("artifacts")?);
            }
            let out = dsp.labels.iter().cloned().map(Some).collect();
            result.labels = Some(dsp.labels);
            out
        }
    };

    let samples: Vec<DalSample> = corpus
        .into_iter()
        .zip(pseudo)
        .map(|(s, p)| DalSample {
            image: s.image,
            class: s.class,
            pseudo: p,
        })
        .collect();
    let heldout: Vec<LabeledImage> = data
        .heldout
        .iter()
        .map(|s| LabeledImage {
            image: s.image.clone(),
            class: s.class,
        })
        .collect();
    let branch = if cfg.method.adversarial() {
        DomainBranch::Adversarial(GrlConfig::new(cfg.lambda)?)
    } else {
        DomainBranch::Off
    };
    let run = train_dal(&samples, &cfg.dal_config(), branch, Some(&heldout)).stage("train_dal")?;
    result.heldout_accuracy = run
        .trace
        .last()
        .and_then(|m| m.heldout_acc)
        .ok_or_else(|| Error::param("training produced no epochs").in_stage("train_dal"))?;
    if let Some(store) = store {
        artifacts.push(
            store
                .put("trace", cfg, "csv", trace_csv(&run.trace).as_bytes())
                .stage("artifacts")?,
        );
    }
    result.trace = run.trace;
    result.artifacts = artifacts;
    Ok(result)
}

fn write_dsp_artifacts(store: &ArtifactStore, cfg: &ExperimentConfig, dsp: &DspOutcome) -> Result<Vec<PathBuf>> {
    let n = dsp.styles.len();
    let dim = dsp.styles[0].to_vec().len();
    let flat: Vec<f64> = dsp.styles.iter().flat_map(|s| s.to_vec()).collect();
    let styles = Tensor::from_f64(vec![n, dim], &flat)?;
    let ffs = serde_json::json!({ "indices": dsp.base.indices, "min_dist_trace": dsp.min_dist_trace });
    let model_path = store.path_for("dsp_model", &ArtifactStore::key("dsp_model", cfg)?, "model");
    let tmp = model_path.with_extension("tmp");
    dsp.classifier.save(&tmp)?;
    let model_bytes = std::fs::read(&tmp).map_err(|e| Error::io(&tmp, e))?;
    std::fs::remove_file(&tmp).map_err(|e| Error::io(&tmp, e))?;
    Ok(vec![
        store.put("styles", cfg, "dtns", &styles.to_bytes())?,
        store.put("ffs", cfg, "json", format!("{ffs}\n").as_bytes())?,
        store.put("dsp_model", cfg, "model", &model_bytes)?,
        store.put("labels", cfg, "jsonl", labels_jsonl(&dsp.labels).as_bytes())?,
    ])
}

/// Generate the dataset for `cfg` and run it.
pub fn run_single(cfg: &ExperimentConfig, store: Option<&ArtifactStore>) -> Result<RunResult> {
    cfg.validate()?;
    let data = gen_dataset(&cfg.dataset_config()).stage("gen_dataset")?;
    run_on_dataset(&data, cfg, store)
}

/// Run one configuration and summarize it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    MetricsReport::from_runs(&[run_single(cfg, None)?])
}

/// Run every (seed, method) of `plan`. Seeds run on separate threads, up to
/// the available parallelism; methods of one seed share the dataset.
pub fn run_plan(plan: &ExperimentPlan, store: Option<&ArtifactStore>) -> Result<Vec<RunResult>> {
    if plan.methods.is_empty() || plan.seeds.is_empty() {
        return Err(Error::param("plan needs at least one method and one seed"));
    }
    let run_seed = |seed: u64| -> Result<Vec<RunResult>> {
        let base = ExperimentConfig {
            seed,
            ..plan.base.clone()
        };
        base.validate()?;
        let data = gen_dataset(&base.dataset_config()).stage("gen_dataset")?;
        plan.methods
            .iter()
            .map(|&method| run_on_dataset(&data, &ExperimentConfig { method, ..base.clone() }, store))
            .collect()
    };
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(plan.seeds.len());
    let per_seed: Vec<Result<Vec<RunResult>>> = if workers <= 1 {
        plan.seeds.iter().map(|&s| run_seed(s)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<RunResult>>>> = plan.seeds.iter().map(|_| None).collect();
        std::thread::scope(|scope| {
            for chunk in slots.chunks_mut(plan.seeds.len().div_ceil(workers)).enumerate() {
                let (ci, chunk) = chunk;
                let offset = ci * plan.seeds.len().div_ceil(workers);
                let run_seed = &run_seed;
                scope.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_seed(plan.seeds[offset + j]));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every slot is filled")).collect()
    };
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

/// Aggregates of one method over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std_accuracy: f64,
    /// Per-epoch discriminator accuracy averaged over seeds.
    pub disc_acc_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label_entropy: Option<EntropyReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bijection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: Vec<MethodSummary>,
}

impl MetricsReport {
    /// Group by method, in order of first appearance.
    pub fn from_runs(runs: &[RunResult]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::param("no runs to summarize"));
        }
        let mut order: Vec<Method> = Vec::new();
        let mut groups: BTreeMap<Method, Vec<&RunResult>> = BTreeMap::new();
        for r in runs {
            if !(0.0..=1.0).contains(&r.heldout_accuracy) {
                return Err(Error::param(format!("accuracy {} outside [0, 1]", r.heldout_accuracy)));
            }
            if !groups.contains_key(&r.method) {
                order.push(r.method);
            }
            groups.entry(r.method).or_default().push(r);
        }
        let methods = order
            .into_iter()
            .map(|m| summarize(m, &groups[&m]))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport { methods })
    }

    pub fn get(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    /// Fixed-width text table.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<14} {:>6} {:>9} {:>9} {:>10} {:>9}",
            "method", "seeds", "mean_acc", "std_acc", "label_ent", "bijection"
        )
        .unwrap();
        for m in &self.methods {
            let ent = m
                .label_entropy
                .as_ref()
                .map_or("-".into(), |e| format!("{:.4}", e.mean_entropy));
            let bij = m.bijection_rate.map_or("-".into(), |b| format!("{b:.2}"));
            writeln!(
                s,
                "{:<14} {:>6} {:>9.4} {:>9.4} {:>10} {:>9}",
                m.method.name(),
                m.seeds.len(),
                m.mean_accuracy,
                m.std_accuracy,
                ent,
                bij
            )
            .unwrap();
        }
        s
    }
}

fn summarize(method: Method, runs: &[&RunResult]) -> Result<MethodSummary> {
    let acc: Vec<f64> = runs.iter().map(|r| r.heldout_accuracy).collect();
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let std = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let epochs = runs.iter().map(|r| r.trace.len()).min().unwrap_or(0);
    let disc_acc_trace = (0..epochs)
        .map(|e| runs.iter().map(|r| r.trace[e].disc_acc).sum::<f64>() / n)
        .collect();
    let labels: Vec<SoftDomainLabel> = runs
        .iter()
        .filter_map(|r| r.labels.as_ref())
        .flatten()
        .cloned()
        .collect();
    let label_entropy = if labels.is_empty() {
        None
    } else {
        Some(label_entropy_report(&labels)?)
    };
    let bij: Vec<bool> = runs.iter().filter_map(|r| r.bijection).collect();
    let bijection_rate = (!bij.is_empty()).then(|| bij.iter().filter(|&&b| b).count() as f64 / bij.len() as f64);
    Ok(MethodSummary {
        method,
        seeds: runs.iter().map(|r| r.seed).collect(),
        accuracies: acc,
        mean_accuracy: mean,
        std_accuracy: std,
        disc_acc_trace,
        label_entropy,
        bijection_rate,
    })
}
