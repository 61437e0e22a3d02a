//! Low-frequency spectrum blending (SCG*): mix the low DCT band of an image
//! with that of a reference while leaving every other coefficient untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dct::{dct2, idct2};
use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_BETA: f64 = 0.15;
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (0.3, 1.0);

/// Parameters of one blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBlendConfig {
    /// Weight of the reference inside the low band.
    pub alpha: f64,
    /// Low-band cutoff on the normalized frequency `(u/H + v/W) / 2`.
    pub beta: f64,
    pub seed: u64,
}

impl SpectrumBlendConfig {
    pub fn new(alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        let cfg = SpectrumBlendConfig { alpha, beta, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        check_beta(self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta {beta} outside (0, 1]")));
    }
    Ok(())
}

/// Whether coefficient `(u, v)` of an `h × w` spectrum lies in the
/// triangular low band. `beta = 1` covers the whole spectrum.
#[inline]
pub fn in_low_band(u: usize, v: usize, h: usize, w: usize, beta: f64) -> bool {
    (u as f64 / h as f64 + v as f64 / w as f64) / 2.0 < beta
}

/// `(1 − α)·a + α·b` inside the low band, `a` elsewhere.
pub fn blend_spectrum(a: &[f64], b: &[f64], h: usize, w: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    for u in 0..h {
        for v in 0..w {
            if in_low_band(u, v, h, w, beta) {
                let i = u * w + v;
                out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
            }
        }
    }
    out
}

/// Per-channel blended spectra, before the inverse transform.
pub fn scg_star_spectra(img: &Image, reference: &Image, cfg: &SpectrumBlendConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if !img.same_shape(reference) {
        return Err(Error::param(format!(
            "image {}x{}x{} and reference {}x{}x{} differ in shape",
            img.height(),
            img.width(),
            img.channels(),
            reference.height(),
            reference.width(),
            reference.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    (0..img.channels())
        .map(|c| {
            let a = dct2(&img.channel(c), h, w)?;
            let b = dct2(&reference.channel(c), h, w)?;
            Ok(blend_spectrum(&a, &b, h, w, cfg.alpha, cfg.beta))
        })
        .collect()
}

/// Blend the low band of `img` towards `reference`, invert, clamp to `[0, 1]`.
pub fn scg_star_blend(img: &Image, reference: &Image, cfg: &SpectrumBlendConfig) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    let planes = scg_star_spectra(img, reference, cfg)?
        .iter()
        .map(|s| idct2(s, h, w))
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(h, w, &planes)
}

/// Seeded standard-normal coefficients inside the low band, zero elsewhere,
/// one spectrum per channel.
pub fn random_reference_spectra(h: usize, w: usize, c: usize, beta: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::param("reference dimensions must be positive"));
    }
    check_beta(beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..c)
        .map(|_| {
            let mut s = vec![0.0; h * w];
            for u in 0..h {
                for v in 0..w {
                    if in_low_band(u, v, h, w, beta) {
                        s[u * w + v] = rng.sample(StandardNormal);
                    }
                }
            }
            s
        })
        .collect())
}

/// A smooth random field: [`random_reference_spectra`] inverted and min-max
/// normalized to `[0, 1]` per channel. A flat channel becomes `0.5`.
pub fn random_reference(h: usize, w: usize, c: usize, beta: f64, seed: u64) -> Result<Image> {
    let planes = random_reference_spectra(h, w, c, beta, seed)?
        .iter()
        .map(|s| {
            let mut x = idct2(s, h, w)?;
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 1e-12 {
                x.iter_mut().for_each(|v| *v = 0.5);
            } else {
                x.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(h, w, &planes)
}

/// How the blend weight is picked for each augmented copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaChoice {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Default for AlphaChoice {
    fn default() -> Self {
        AlphaChoice::Uniform {
            lo: DEFAULT_ALPHA_RANGE.0,
            hi: DEFAULT_ALPHA_RANGE.1,
        }
    }
}

impl std::str::FromStr for AlphaChoice {
    type Err = Error;

    /// `random` or a number.
    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(AlphaChoice::default());
        }
        let a: f64 = s
            .parse()
            .map_err(|_| Error::param(format!("alpha must be a number or `random`, got `{s}`")))?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::param(format!("alpha {a} outside [0, 1]")));
        }
        Ok(AlphaChoice::Fixed(a))
    }
}

/// Corpus expansion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScgAugmentConfig {
    pub per_image: usize,
    pub alpha: AlphaChoice,
    pub beta: f64,
    pub seed: u64,
}

impl Default for ScgAugmentConfig {
    fn default() -> Self {
        ScgAugmentConfig {
            per_image: 1,
            alpha: AlphaChoice::default(),
            beta: DEFAULT_BETA,
            seed: 0,
        }
    }
}

/// `per_image` stylistic variants of image number `index`, each blended
/// against its own random reference. Seeds derive from `(cfg.seed, index, n)`
/// so that variants are independent of processing order.
pub fn augment(img: &Image, index: usize, cfg: &ScgAugmentConfig) -> Result<Vec<Image>> {
    check_beta(cfg.beta)?;
    (0..cfg.per_image)
        .map(|n| {
            let seed = derive_seed(cfg.seed, index as u64, n as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha = match cfg.alpha {
                AlphaChoice::Fixed(a) => a,
                AlphaChoice::Uniform { lo, hi } if lo < hi => rng.random_range(lo..=hi),
                AlphaChoice::Uniform { lo, .. } => lo,
            };
            let reference = random_reference(img.height(), img.width(), img.channels(), cfg.beta, rng.random())?;
            scg_star_blend(img, &reference, &SpectrumBlendConfig::new(alpha, cfg.beta, seed)?)
        })
        .collect()
}

/// SplitMix64-style mixing of a base seed with two counters.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
