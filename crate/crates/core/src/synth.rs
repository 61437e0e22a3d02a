//! Synthetic multi-domain image sets.
//!
//! Every image shows one oriented bar; the orientation is the class. Each
//! domain renders bars under its own colour cast, brightness, noise level
//! and smooth tint, so style statistics separate domains while geometry
//! carries the class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scg::{derive_seed, random_reference};

/// The style transform of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    /// Multiplicative per-channel colour cast.
    pub gains: [f64; 3],
    pub brightness: f64,
    pub noise_sigma: f64,
    pub tint_seed: u64,
    /// Amplitude of the smooth additive tint field.
    pub tint_strength: f64,
}

impl SyntheticDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gains.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::param("domain gains must be positive"));
        }
        if [self.noise_sigma, self.tint_strength]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
            || !self.brightness.is_finite()
        {
            return Err(Error::param("noise and tint must be non-negative, brightness finite"));
        }
        Ok(())
    }
}

/// Colour casts loosely modelled on different water types. The last entry
/// is the default unseen domain when four domains are used for training.
const PALETTE: [([f64; 3], f64, f64); 8] = [
    ([0.45, 0.85, 1.00], 0.00, 0.02),
    ([0.95, 1.00, 0.45], 0.10, 0.05),
    ([0.35, 0.55, 1.10], -0.05, 0.03),
    ([1.10, 0.75, 0.65], 0.15, 0.01),
    ([0.70, 1.10, 0.80], 0.05, 0.04),
    ([0.60, 0.60, 0.60], 0.25, 0.06),
    ([1.00, 0.50, 1.00], 0.00, 0.02),
    ([0.80, 0.95, 0.55], -0.10, 0.03),
];

/// Styles for `n` domains: palette entries jittered by `seed`, random casts
/// once the palette runs out.
pub fn domain_styles(n: usize, seed: u64) -> Vec<SyntheticDomainSpec> {
    (0..n)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100, d as u64));
            let (gains, brightness, noise) = match PALETTE.get(d) {
                Some(&(g, b, s)) => (g.map(|v| v * (1.0 + 0.05 * rng.random_range(-1.0..1.0))), b, s),
                None => (
                    [0.0; 3].map(|_| rng.random_range(0.35..1.15)),
                    rng.random_range(-0.1..0.25),
                    rng.random_range(0.01..0.06),
                ),
            };
            SyntheticDomainSpec {
                gains,
                brightness,
                noise_sigma: noise,
                tint_seed: rng.random(),
                tint_strength: 0.15,
            }
        })
        .collect()
}

/// Layout of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_domains_train: usize,
    pub n_classes: usize,
    pub images_per_domain: usize,
    pub heldout_images: usize,
    pub size: usize,
    /// Probability that a training image shows its domain's favoured class
    /// (`domain mod n_classes`) instead of a uniformly drawn one.
    pub class_domain_bias: f64,
    /// Brightness difference between bar and background before styling.
    pub contrast: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_domains_train: 4,
            n_classes: 3,
            images_per_domain: 200,
            heldout_images: 200,
            size: 32,
            class_domain_bias: 0.0,
            contrast: 0.5,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_domains_train == 0 || self.n_classes < 2 || self.images_per_domain == 0 || self.heldout_images == 0 {
            return Err(Error::param(
                "need >= 1 training domain, >= 2 classes and non-empty splits",
            ));
        }
        if self.size < 12 {
            return Err(Error::param(format!("{}px is too small to draw a bar", self.size)));
        }
        if !(0.0..1.0).contains(&self.class_domain_bias) {
            return Err(Error::param("class_domain_bias must be in [0, 1)"));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::param("contrast must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One rendered image with its class and true domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image: Image,
    pub class: usize,
    pub domain: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub train: Vec<SyntheticImage>,
    /// Images from the unseen domain (index `n_domains_train`).
    pub heldout: Vec<SyntheticImage>,
    pub styles: Vec<SyntheticDomainSpec>,
}

/// Render the training domains and one unseen domain.
pub fn gen_dataset(cfg: &DatasetConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let styles = domain_styles(cfg.n_domains_train + 1, cfg.seed);
    let tints = styles
        .iter()
        .map(|s| random_reference(cfg.size, cfg.size, 3, 0.1, s.tint_seed))
        .collect::<Result<Vec<_>>>()?;

    let render_domain = |d: usize, count: usize, bias: f64| -> Result<Vec<SyntheticImage>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 200, d as u64));
        (0..count)
            .map(|_| {
                let class = if rng.random::<f64>() < bias {
                    d % cfg.n_classes
                } else {
                    rng.random_range(0..cfg.n_classes)
                };
                let image = render(
                    cfg.size,
                    class,
                    cfg.n_classes,
                    cfg.contrast,
                    &styles[d],
                    &tints[d],
                    &mut rng,
                )?;
                Ok(SyntheticImage {
                    image,
                    class,
                    domain: d,
                })
            })
            .collect()
    };

    let mut train = Vec::with_capacity(cfg.n_domains_train * cfg.images_per_domain);
    for d in 0..cfg.n_domains_train {
        train.extend(render_domain(d, cfg.images_per_domain, cfg.class_domain_bias)?);
    }
    let heldout = render_domain(cfg.n_domains_train, cfg.heldout_images, 0.0)?;
    Ok(SyntheticDataset { train, heldout, styles })
}

/// One image entry of a dataset manifest; `file` is relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub class: usize,
    pub domain: usize,
}

/// `manifest.json` written next to the PNGs of a saved dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub styles: Vec<SyntheticDomainSpec>,
    pub train: Vec<ManifestEntry>,
    pub heldout: Vec<ManifestEntry>,
}

/// Write `train/NNNNN.png`, `heldout/NNNNN.png` and `manifest.json` under
/// `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, cfg: &DatasetConfig, data: &SyntheticDataset) -> Result<Manifest> {
    let dir = dir.as_ref();
    let write_split = |name: &str, items: &[SyntheticImage]| -> Result<Vec<ManifestEntry>> {
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        items
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let file = format!("{name}/{i:05}.png");
                s.image.save_png(dir.join(&file))?;
                Ok(ManifestEntry {
                    file,
                    class: s.class,
                    domain: s.domain,
                })
            })
            .collect()
    };
    let manifest = Manifest {
        config: cfg.clone(),
        styles: data.styles.clone(),
        train: write_split("train", &data.train)?,
        heldout: write_split("heldout", &data.heldout)?,
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Read a manifest and the images it lists.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let path = manifest_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let load = |entries: &[ManifestEntry]| -> Result<Vec<SyntheticImage>> {
        entries
            .iter()
            .map(|e| {
                Ok(SyntheticImage {
                    image: Image::load_png(root.join(&e.file))?,
                    class: e.class,
                    domain: e.domain,
                })
            })
            .collect()
    };
    Ok(SyntheticDataset {
        train: load(&manifest.train)?,
        heldout: load(&manifest.heldout)?,
        styles: manifest.styles,
    })
}

/// Anti-aliased bar at angle `π·class/n_classes` (with jitter) under the
/// domain style.
fn render<R: Rng>(
    size: usize,
    class: usize,
    n_classes: usize,
    contrast: f64,
    style: &SyntheticDomainSpec,
    tint: &Image,
    rng: &mut R,
) -> Result<Image> {
    let s = size as f64;
    let angle = std::f64::consts::PI * class as f64 / n_classes as f64 + rng.random_range(-0.12..0.12);
    let (cy, cx) = (
        s / 2.0 + rng.random_range(-0.12..0.12) * s,
        s / 2.0 + rng.random_range(-0.12..0.12) * s,
    );
    let half_len = rng.random_range(0.25..0.35) * s;
    let half_width = rng.random_range(0.05..0.08) * s;
    let (dir_y, dir_x) = (angle.sin(), angle.cos());
    let gain_jitter: [f64; 3] = [0.0; 3].map(|_| 1.0 + 0.04 * rng.sample::<f64, _>(StandardNormal));
    let bright_jitter = 0.02 * rng.sample::<f64, _>(StandardNormal);

    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (py, px) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let along = py * dir_y + px * dir_x;
            let across = -py * dir_x + px * dir_y;
            // one-pixel soft edge
            let inside =
                (half_len - along.abs() + 0.5).clamp(0.0, 1.0) * (half_width - across.abs() + 0.5).clamp(0.0, 1.0);
            let base = 0.5 + contrast * (inside - 0.5);
            for c in 0..3 {
                let t = tint.get(y, x, c) - 0.5;
                let v = style.gains[c] * gain_jitter[c] * base
                    + style.brightness
                    + bright_jitter
                    + style.tint_strength * t
                    + style.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                data.push(v);
            }
        }
    }
    Image::from_clamped(size, size, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let cfg = DatasetConfig {
            images_per_domain: 5,
            heldout_images: 5,
            ..Default::default()
        };
        let a = gen_dataset(&cfg).unwrap();
        assert_eq!(a, gen_dataset(&cfg).unwrap());
        let b = gen_dataset(&DatasetConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train[0].image, b.train[0].image);
    }

    #[test]
    fn splits_and_tags() {
        let ds = gen_dataset(&DatasetConfig {
            images_per_domain: 10,
            heldout_images: 7,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds.train.len(), 40);
        assert_eq!(ds.heldout.len(), 7);
        assert!(ds.heldout.iter().all(|s| s.domain == 4));
        assert!(ds.train.iter().all(|s| s.domain < 4 && s.class < 3));
        assert_eq!(ds.styles.len(), 5);
        for s in &ds.styles[..4] {
            assert_ne!(s, &ds.styles[4]);
        }
    }

    #[test]
    fn invalid_layouts() {
        let bad = |f: fn(&mut DatasetConfig)| {
            let mut c = DatasetConfig::default();
            f(&mut c);
            gen_dataset(&c).is_err()
        };
        assert!(bad(|c| c.n_domains_train = 0));
        assert!(bad(|c| c.n_classes = 1));
        assert!(bad(|c| c.size = 8));
        assert!(bad(|c| c.class_domain_bias = 1.0));
        assert!(bad(|c| c.images_per_domain = 0));
    }

    #[test]
    fn saved_dataset_loads_back() {
        let cfg = DatasetConfig {
            images_per_domain: 3,
            heldout_images: 2,
            size: 16,
            ..Default::default()
        };
        let data = gen_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_dataset(dir.path(), &cfg, &data).unwrap();
        assert_eq!(m.train.len(), 12);
        assert_eq!(m.train[5].file, "train/00005.png");
        let back = load_dataset(dir.path().join("manifest.json")).unwrap();
        assert_eq!(back.styles, data.styles);
        for (a, b) in back.train.iter().zip(&data.train) {
            assert_eq!((a.class, a.domain), (b.class, b.domain));
            // 8-bit quantization
            assert!(a
                .image
                .data()
                .iter()
                .zip(b.image.data())
                .all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        }
    }

    #[test]
    fn more_domains_than_palette() {
        let s = domain_styles(12, 3);
        assert_eq!(s.len(), 12);
        assert!(s.iter().all(|d| d.validate().is_ok()));
    }
}
