//! `dsp`: run the pseudo-domain-label pipeline step by step or end to end.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dsp_core::adain::adain_transfer;
use dsp_core::dal::{trace_csv, train_dal, DalConfig, DalSample, DomainBranch, GrlConfig, LabeledImage};
use dsp_core::dsp::{assign_labels, fit_domain_classifier, pooled_input, DomainClassifier, TrainConfig};
use dsp_core::features::{conv_features, style_of, STYLE_EPS};
use dsp_core::ffs::{ffs_run, BaseDomainSet, Start};
use dsp_core::harness::{
    labels_jsonl, parse_labels_jsonl, run_plan, ArtifactStore, ExperimentConfig, ExperimentPlan, MetricsReport,
};
use dsp_core::scg::{augment, AlphaChoice, ScgAugmentConfig};
use dsp_core::synth::{gen_dataset, load_dataset, save_dataset, DatasetConfig};
use dsp_core::tensor::{feature_stack, feature_unstack, read_tensor, style_stack, style_unstack, write_tensor};
use dsp_core::{FilterBank, Image};

#[derive(Parser)]
#[command(
    name = "dsp",
    version,
    about = "Pseudo domain labels and domain-adversarial training on toy data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-domain dataset as PNGs plus manifest.json.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        domains: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        images_per_domain: usize,
        #[arg(long, default_value_t = 200)]
        heldout: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0.6)]
        class_domain_bias: f64,
        #[arg(long, default_value_t = 0.2)]
        contrast: f64,
    },
    /// Filter-bank features (N×C×H×W) and style vectors (N×2C) of every PNG
    /// in a directory, in file-name order.
    Extract {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        styles: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, default_value_t = dsp_core::features::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Farthest feature sampling over a style set.
    Ffs {
        #[arg(long)]
        styles: PathBuf,
        #[arg(long)]
        k: usize,
        /// Start index, or `random:SEED`.
        #[arg(long, default_value = "0")]
        start: Start,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every feature map in every base style. Writes the stack to
    /// `--out` and the (source, domain) tags to `<out>.tags.json`.
    Stylize {
        #[arg(long)]
        features: PathBuf,
        /// JSON written by `ffs`.
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the domain classifier on a stylized stack.
    TrainDsp {
        #[arg(long)]
        stylized: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = dsp_core::dsp::DEFAULT_ITERATIONS)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Soft pseudo domain labels for a feature stack.
    AssignLabels {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train backbone, task head and discriminator. Without `--labels` the
    /// domain branch is off.
    TrainDal {
        /// manifest.json written by `gen-data`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = dsp_core::dal::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        final_lr_ratio: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Low-frequency spectrum blending of every PNG in a directory.
    ScgAugment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        per_image: usize,
        /// A number in [0, 1] or `random`.
        #[arg(long, default_value = "random")]
        alpha: AlphaChoice,
        #[arg(long, default_value_t = dsp_core::scg::DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run methods over seeds from a TOML config and write a report.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            out,
            seed,
            domains,
            classes,
            images_per_domain,
            heldout,
            size,
            class_domain_bias,
            contrast,
        } => {
            let cfg = DatasetConfig {
                n_domains_train: domains,
                n_classes: classes,
                images_per_domain,
                heldout_images: heldout,
                size,
                class_domain_bias,
                contrast,
                seed,
            };
            let data = gen_dataset(&cfg)?;
            let m = save_dataset(&out, &cfg, &data)?;
            println!(
                "wrote {} training and {} held-out images to {}",
                m.train.len(),
                m.heldout.len(),
                out.display()
            );
        }
        Command::Extract {
            images,
            features,
            styles,
            channels,
            kernel,
            stride,
            seed,
        } => {
            let imgs = load_png_dir(&images)?;
            ensure!(!imgs.is_empty(), "no PNG files in {}", images.display());
            let cin = imgs[0].1.channels();
            let bank = FilterBank::build(cin, channels, kernel, seed)?.with_stride(stride)?;
            let maps = imgs
                .iter()
                .map(|(p, img)| conv_features(img, &bank).with_context(|| format!("features of {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            write_tensor(&features, &feature_stack(&maps)?)?;
            if let Some(path) = styles {
                let st = maps
                    .iter()
                    .map(|m| style_of(m, STYLE_EPS))
                    .collect::<dsp_core::Result<Vec<_>>>()?;
                write_tensor(&path, &style_stack(&st)?)?;
            }
            println!("extracted {} feature maps", maps.len());
        }
        Command::Ffs { styles, k, start, out } => {
            let st = style_unstack(&read_tensor(&styles)?)?;
            let (base, trace) = ffs_run(&st, k, start)?;
            write_json(
                &out,
                &FfsOutput {
                    indices: base.indices,
                    min_dist_trace: trace,
                },
            )?;
        }
        Command::Stylize { features, base, out } => {
            let maps = feature_unstack(&read_tensor(&features)?)?;
            let sel: FfsOutput = read_json(&base)?;
            let styles = maps
                .iter()
                .map(|m| style_of(m, STYLE_EPS))
                .collect::<dsp_core::Result<Vec<_>>>()?;
            let base = BaseDomainSet::from_indices(&styles, sel.indices)?;
            let mut stack = Vec::with_capacity(maps.len() * base.k());
            let mut tags = Tags::default();
            for (i, m) in maps.iter().enumerate() {
                for (k, target) in base.styles.iter().enumerate() {
                    stack.push(adain_transfer(m, target, STYLE_EPS)?);
                    tags.source.push(i);
                    tags.domain.push(k);
                }
            }
            write_tensor(&out, &feature_stack(&stack)?)?;
            write_json(&tags_path(&out), &tags)?;
        }
        Command::TrainDsp {
            stylized,
            k,
            iters,
            seed,
            lr,
            batch,
            hidden,
            out,
        } => {
            let maps = feature_unstack(&read_tensor(&stylized)?)?;
            let tags: Tags = read_json(&tags_path(&stylized))?;
            ensure!(
                tags.domain.len() == maps.len(),
                "tag count does not match the stylized stack"
            );
            let inputs = maps.iter().map(pooled_input).collect::<dsp_core::Result<Vec<_>>>()?;
            let cfg = TrainConfig {
                iterations: iters,
                learning_rate: lr,
                batch_size: batch,
                seed,
                hidden,
            };
            let (f, log) = fit_domain_classifier(&inputs, &tags.domain, k, &cfg)?;
            f.save(&out)?;
            println!("loss {:.6} -> {:.6}", log.initial_loss, log.final_loss);
        }
        Command::AssignLabels { model, features, out } => {
            let f = DomainClassifier::load(&model)?;
            let maps = feature_unstack(&read_tensor(&features)?)?;
            let labels = assign_labels(&f, &maps)?;
            write_file(&out, labels_jsonl(&labels).as_bytes())?;
        }
        Command::TrainDal {
            data,
            labels,
            lambda,
            epochs,
            seed,
            lr,
            final_lr_ratio,
            out,
            trace,
        } => {
            let ds = load_dataset(&data)?;
            let pseudo = match &labels {
                Some(p) => {
                    let l = parse_labels_jsonl(
                        &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                    )?;
                    ensure!(
                        l.len() == ds.train.len(),
                        "{} labels for {} training images",
                        l.len(),
                        ds.train.len()
                    );
                    l.into_iter().map(Some).collect()
                }
                None => vec![None; ds.train.len()],
            };
            let samples: Vec<DalSample> = ds
                .train
                .into_iter()
                .zip(pseudo)
                .map(|(s, p)| DalSample {
                    image: s.image,
                    class: s.class,
                    pseudo: p,
                })
                .collect();
            let heldout: Vec<LabeledImage> = ds
                .heldout
                .into_iter()
                .map(|s| LabeledImage {
                    image: s.image,
                    class: s.class,
                })
                .collect();
            let cfg = DalConfig {
                epochs,
                learning_rate: lr,
                final_lr_ratio,
                seed,
                ..Default::default()
            };
            let branch = match labels {
                Some(_) => DomainBranch::Adversarial(GrlConfig::new(lambda)?),
                None => DomainBranch::Off,
            };
            let run = train_dal(
                &samples,
                &cfg,
                branch,
                (!heldout.is_empty()).then_some(heldout.as_slice()),
            )?;
            run.model.save_dir(&out)?;
            if let Some(t) = trace {
                write_file(&t, trace_csv(&run.trace).as_bytes())?;
            }
            if let Some(acc) = run.trace.last().and_then(|m| m.heldout_acc) {
                println!("held-out accuracy {acc:.4}");
            }
        }
        Command::ScgAugment {
            input,
            out,
            per_image,
            alpha,
            beta,
            seed,
        } => {
            let cfg = ScgAugmentConfig {
                per_image,
                alpha,
                beta,
                seed,
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let imgs = load_png_dir(&input)?;
            for (i, (path, img)) in imgs.iter().enumerate() {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .context("non-UTF-8 file name")?;
                for (n, v) in augment(img, i, &cfg)?.iter().enumerate() {
                    v.save_png(out.join(format!("{stem}_scg{n}.png")))?;
                }
            }
            println!("augmented {} images", imgs.len());
        }
        Command::Experiment { config, out } => experiment(&config, &out)?,
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FfsOutput {
    indices: Vec<usize>,
    min_dist_trace: Vec<f64>,
}

#[derive(Default, Serialize, Deserialize)]
struct Tags {
    source: Vec<usize>,
    domain: Vec<usize>,
}

#[derive(Serialize)]
struct ExperimentReport<'a> {
    plan: &'a ExperimentPlan,
    summary: &'a MetricsReport,
    runs: Vec<RunRecord<'a>>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    method: &'a str,
    seed: u64,
    heldout_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_indices: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_domains: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bijection: Option<bool>,
    trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<String>,
}

/// Flattened config fields do not reject unknown keys on their own.
fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let table: toml::Table = toml::from_str(text)?;
    let known = serde_json::to_value(ExperimentConfig::default())?;
    for key in table.keys() {
        ensure!(
            key == "methods" || key == "seeds" || known.get(key).is_some(),
            "unknown key `{key}`"
        );
    }
    Ok(table.try_into()?)
}

fn experiment(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let plan = parse_plan(&text).with_context(|| format!("parsing {}", config.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let store = ArtifactStore::new(out.join("artifacts"))?;
    let runs = run_plan(&plan, Some(&store))?;
    let summary = MetricsReport::from_runs(&runs)?;

    let mut records = Vec::new();
    for r in &runs {
        let dir = format!("{}/seed{}", r.method.name(), r.seed);
        fs::create_dir_all(out.join(&dir))?;
        let trace = format!("{dir}/trace.csv");
        write_file(&out.join(&trace), trace_csv(&r.trace).as_bytes())?;
        let labels = match &r.labels {
            Some(l) => {
                let p = format!("{dir}/labels.jsonl");
                write_file(&out.join(&p), labels_jsonl(l).as_bytes())?;
                Some(p)
            }
            None => None,
        };
        records.push(RunRecord {
            method: r.method.name(),
            seed: r.seed,
            heldout_accuracy: r.heldout_accuracy,
            base_indices: r.base_indices.as_deref(),
            base_domains: r.base_domains.as_deref(),
            bijection: r.bijection,
            trace,
            labels,
        });
    }
    write_json(
        &out.join("report.json"),
        &ExperimentReport {
            plan: &plan,
            summary: &summary,
            runs: records,
        },
    )?;
    print!("{}", summary.summary_table());
    Ok(())
}

fn tags_path(stack: &Path) -> PathBuf {
    let mut s = stack.as_os_str().to_owned();
    s.push(".tags.json");
    PathBuf::from(s)
}

/// PNG files of `dir`, sorted by file name.
fn load_png_dir(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let img = Image::load_png(&p).with_context(|| format!("loading {}", p.display()))?;
            Ok((p, img))
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(v) => Ok(v),
        Err(e) => bail!("parsing {}: {e}", path.display()),
    }
}
