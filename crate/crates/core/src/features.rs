//! Shallow convolutional features and their per-channel statistics.
//!
//! A fixed, seeded bank of zero-mean, unit-norm kernels stands in for the
//! early layers of a pretrained network. The channel-wise mean and standard
//! deviation of its responses form the [`StyleVector`] of an image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Variance floor used inside every standard deviation.
pub const STYLE_EPS: f64 = 1e-5;

pub const DEFAULT_STRIDE: usize = 2;

/// `cout × cin × k × k` cross-correlation kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    cin: usize,
    cout: usize,
    kernel_size: usize,
    stride: usize,
    seed: u64,
    kernels: Vec<f64>,
}

impl FilterBank {
    /// Seeded bank: uniform draws on `[-1, 1)`, then each kernel is
    /// mean-centred and scaled to unit Frobenius norm. Stride defaults to 2.
    pub fn build(cin: usize, cout: usize, kernel_size: usize, seed: u64) -> Result<Self> {
        if cin == 0 || cout == 0 {
            return Err(Error::param("filter bank needs at least one input and output channel"));
        }
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::param(format!(
                "kernel size must be odd and positive, got {kernel_size}"
            )));
        }
        let per_kernel = cin * kernel_size * kernel_size;
        if per_kernel < 2 {
            return Err(Error::param(
                "a single-tap kernel cannot be both zero-mean and unit-norm",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernels: Vec<f64> = (0..cout * per_kernel).map(|_| rng.random_range(-1.0..1.0)).collect();
        for kernel in kernels.chunks_exact_mut(per_kernel) {
            let mean = kernel.iter().sum::<f64>() / per_kernel as f64;
            kernel.iter_mut().for_each(|v| *v -= mean);
            let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Zero norm after centring has probability zero for continuous draws.
            debug_assert!(norm > 0.0);
            kernel.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(FilterBank {
            cin,
            cout,
            kernel_size,
            stride: DEFAULT_STRIDE,
            seed,
            kernels,
        })
    }

    /// Wrap explicit kernels laid out `cout × cin × k × k`. No normalization
    /// is applied.
    pub fn from_kernels(cin: usize, cout: usize, kernel_size: usize, stride: usize, kernels: Vec<f64>) -> Result<Self> {
        if cin == 0 || cout == 0 || kernel_size == 0 || kernel_size.is_multiple_of(2) || stride == 0 {
            return Err(Error::param("invalid filter bank dimensions"));
        }
        if kernels.len() != cout * cin * kernel_size * kernel_size {
            return Err(Error::param("kernel buffer length does not match dimensions"));
        }
        if kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite kernel value"));
        }
        Ok(FilterBank {
            cin,
            cout,
            kernel_size,
            stride,
            seed: 0,
            kernels,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::param("stride must be positive"));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn cin(&self) -> usize {
        self.cin
    }
    pub fn cout(&self) -> usize {
        self.cout
    }
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn kernels(&self) -> &[f64] {
        &self.kernels
    }

    /// Kernel `o` as a flat `cin × k × k` slice.
    pub fn kernel(&self, o: usize) -> &[f64] {
        let n = self.cin * self.kernel_size * self.kernel_size;
        &self.kernels[o * n..(o + 1) * n]
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel_size;
        (h >= k && w >= k).then(|| ((h - k) / self.stride + 1, (w - k) / self.stride + 1))
    }
}

/// Channel-major (`C × H × W`) feature responses.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels * height * width != data.len() {
            return Err(Error::param("feature map buffer length does not match dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Valid (unpadded) strided cross-correlation of `img` with every kernel.
pub fn conv_features(img: &Image, bank: &FilterBank) -> Result<FeatureMap> {
    if img.channels() != bank.cin {
        return Err(Error::param(format!(
            "image has {} channels, filter bank expects {}",
            img.channels(),
            bank.cin
        )));
    }
    let (oh, ow) = bank.output_size(img.height(), img.width()).ok_or_else(|| {
        Error::param(format!(
            "{}x{} image smaller than {}x{} kernel",
            img.height(),
            img.width(),
            bank.kernel_size,
            bank.kernel_size
        ))
    })?;
    let (k, s, cin) = (bank.kernel_size, bank.stride, bank.cin);
    let w = img.width();
    let px = img.data();
    let mut out = vec![0.0; bank.cout * oh * ow];
    for o in 0..bank.cout {
        let kernel = bank.kernel(o);
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..k {
                    let row = (oy * s + dy) * w + ox * s;
                    for dx in 0..k {
                        let base = (row + dx) * cin;
                        for c in 0..cin {
                            acc += kernel[(c * k + dy) * k + dx] * px[base + c];
                        }
                    }
                }
                plane[oy * ow + ox] = acc;
            }
        }
    }
    FeatureMap::new(bank.cout, oh, ow, out)
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StyleVector {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::param("mu and sigma lengths differ"));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::param("style statistics must be finite"));
        }
        if sigma.iter().any(|&s| s < 0.0) {
            return Err(Error::param("negative standard deviation"));
        }
        Ok(StyleVector { mu, sigma })
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// `mu ⧺ sigma`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.mu.len());
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.sigma);
        v
    }

    /// Inverse of [`StyleVector::to_vec`].
    pub fn from_concat(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::param("concatenated style vector has odd length"));
        }
        let c = v.len() / 2;
        StyleVector::new(v[..c].to_vec(), v[c..].to_vec())
    }
}

/// Spatial mean and `sqrt(population variance + eps)` of every channel.
pub fn style_of(fm: &FeatureMap, eps: f64) -> Result<StyleVector> {
    if fm.is_empty() || fm.channels == 0 {
        return Err(Error::param("cannot take statistics of an empty feature map"));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param("eps must be finite and non-negative"));
    }
    let n = (fm.height * fm.width) as f64;
    let (mu, sigma) = (0..fm.channels)
        .map(|c| {
            let plane = fm.plane(c);
            let mean = plane.iter().sum::<f64>() / n;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, (var + eps).sqrt())
        })
        .unzip();
    Ok(StyleVector { mu, sigma })
}

/// Squared Euclidean distance between the concatenated statistics.
pub fn style_distance(a: &StyleVector, b: &StyleVector) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(Error::param(format!(
            "style vectors have {} and {} channels",
            a.channels(),
            b.channels()
        )));
    }
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    Ok(sq(&a.mu, &b.mu) + sq(&a.sigma, &b.sigma))
}

/// Convolve and summarize in one step.
pub fn image_style(img: &Image, bank: &FilterBank) -> Result<StyleVector> {
    style_of(&conv_features(img, bank)?, STYLE_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, c, (0..h * w * c).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Straightforward six-deep loop over output positions and taps.
    fn conv_oracle(img: &Image, bank: &FilterBank) -> Vec<f64> {
        let k = bank.kernel_size();
        let s = bank.stride();
        let oh = (img.height() - k) / s + 1;
        let ow = (img.width() - k) / s + 1;
        let mut out = Vec::new();
        for o in 0..bank.cout() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..bank.cin() {
                        for dy in 0..k {
                            for dx in 0..k {
                                let kv = bank.kernels()[((o * bank.cin() + c) * k + dy) * k + dx];
                                acc += kv * img.get(y * s + dy, x * s + dx, c);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn bank_is_deterministic() {
        let a = FilterBank::build(3, 8, 3, 7).unwrap();
        let b = FilterBank::build(3, 8, 3, 7).unwrap();
        assert_eq!(a.kernels(), b.kernels());
        assert_ne!(a.kernels(), FilterBank::build(3, 8, 3, 8).unwrap().kernels());
    }

    #[test]
    fn kernels_are_zero_mean_unit_norm() {
        let bank = FilterBank::build(3, 64, 3, 0).unwrap();
        assert_eq!(bank.cout(), 64);
        for o in 0..bank.cout() {
            let k = bank.kernel(o);
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(mean.abs() < 1e-6);
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bank_rejects_bad_dimensions() {
        assert!(FilterBank::build(3, 0, 3, 0).is_err());
        assert!(FilterBank::build(3, 4, 2, 0).is_err());
        assert!(FilterBank::build(3, 4, 0, 0).is_err());
        assert!(FilterBank::build(1, 4, 1, 0).is_err());
        assert!(FilterBank::build(3, 4, 3, 0).unwrap().with_stride(0).is_err());
    }

    #[test]
    fn identity_kernel_copies_input() {
        let img = random_image(5, 4, 1, 3);
        let bank = FilterBank::from_kernels(1, 1, 1, 1, vec![1.0]).unwrap();
        let fm = conv_features(&img, &bank).unwrap();
        assert_eq!(fm.data(), img.data());
    }

    #[test]
    fn constant_image_is_annihilated() {
        let img = Image::filled(9, 9, 3, 0.37).unwrap();
        let bank = FilterBank::build(3, 8, 3, 1).unwrap();
        let fm = conv_features(&img, &bank).unwrap();
        assert!(fm.data().iter().all(|v| v.abs() < 1e-12));
        let st = style_of(&fm, STYLE_EPS).unwrap();
        assert!(st.sigma.iter().all(|&s| s == STYLE_EPS.sqrt()));
    }

    #[test]
    fn output_size_follows_stride() {
        let img = random_image(9, 8, 3, 0);
        let bank = FilterBank::build(3, 2, 3, 0).unwrap();
        let fm = conv_features(&img, &bank).unwrap();
        assert_eq!((fm.height(), fm.width()), (4, 3));
    }

    #[test]
    fn conv_errors() {
        let bank = FilterBank::build(3, 2, 3, 0).unwrap();
        assert!(conv_features(&random_image(8, 8, 1, 0), &bank).is_err());
        assert!(conv_features(&random_image(2, 8, 3, 0), &bank).is_err());
    }

    #[test]
    fn conv_matches_oracle_on_fixed_instance() {
        let img = random_image(8, 8, 3, 11);
        let bank = FilterBank::build(3, 4, 3, 5).unwrap().with_stride(1).unwrap();
        let fm = conv_features(&img, &bank).unwrap();
        for (a, b) in fm.data().iter().zip(conv_oracle(&img, &bank)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_matches_oracle_on_random_instances() {
        for seed in 0..120u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cin = rng.random_range(1..4);
            let k = [1usize, 3, 5][rng.random_range(0..3)];
            if cin * k * k < 2 {
                continue;
            }
            let h = rng.random_range(k..k + 8);
            let w = rng.random_range(k..k + 8);
            let stride = rng.random_range(1..4);
            let bank = FilterBank::build(cin, rng.random_range(1..5), k, seed)
                .unwrap()
                .with_stride(stride)
                .unwrap();
            let img = random_image(h, w, cin, seed + 1000);
            let fm = conv_features(&img, &bank).unwrap();
            let oracle = conv_oracle(&img, &bank);
            assert_eq!(fm.data().len(), oracle.len());
            for (a, b) in fm.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "seed {seed}");
            }
        }
    }

    #[test]
    fn statistics_analytic_cases() {
        let fm = FeatureMap::new(1, 2, 2, vec![0.5; 4]).unwrap();
        let st = style_of(&fm, STYLE_EPS).unwrap();
        assert_eq!(st.mu, vec![0.5]);
        assert_eq!(st.sigma, vec![STYLE_EPS.sqrt()]);

        let fm = FeatureMap::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let st = style_of(&fm, STYLE_EPS).unwrap();
        assert_eq!(st.mu, vec![0.5]);
        assert!((st.sigma[0] - (0.25 + STYLE_EPS).sqrt()).abs() < 1e-15);

        assert!(style_of(&FeatureMap::new(0, 0, 0, vec![]).unwrap(), STYLE_EPS).is_err());
    }

    #[test]
    fn statistics_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fm = FeatureMap::new(4, 5, 5, data.clone()).unwrap();
        let st = style_of(&fm, STYLE_EPS).unwrap();
        for c in 0..4 {
            let xs = &data[c * 25..(c + 1) * 25];
            let mut mean = 0.0;
            for x in xs {
                mean += x;
            }
            mean /= 25.0;
            let mut var = 0.0;
            for x in xs {
                var += (x - mean).powi(2);
            }
            var /= 25.0;
            assert!((st.mu[c] - mean).abs() < 1e-6);
            assert!((st.sigma[c] - (var + STYLE_EPS).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn distance_cases() {
        let a = StyleVector::new(vec![0.0], vec![1.0]).unwrap();
        let b = StyleVector::new(vec![3.0], vec![5.0]).unwrap();
        assert_eq!(style_distance(&a, &b).unwrap(), 25.0);
        assert_eq!(style_distance(&a, &a).unwrap(), 0.0);
        let c = StyleVector::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(style_distance(&a, &c).is_err());
    }

    #[test]
    fn style_vector_validation() {
        assert!(StyleVector::new(vec![0.0], vec![-1.0]).is_err());
        assert!(StyleVector::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let s = StyleVector::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(StyleVector::from_concat(&s.to_vec()).unwrap(), s);
    }

    fn style_strategy() -> impl Strategy<Value = (StyleVector, StyleVector)> {
        (1usize..6).prop_flat_map(|c| {
            let v = || prop::collection::vec(-5.0f64..5.0, c);
            let s = || prop::collection::vec(0.0f64..5.0, c);
            (v(), s(), v(), s())
                .prop_map(|(m1, s1, m2, s2)| (StyleVector::new(m1, s1).unwrap(), StyleVector::new(m2, s2).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_matches_sum((a, b) in style_strategy()) {
            let d = style_distance(&a, &b).unwrap();
            prop_assert_eq!(d, style_distance(&b, &a).unwrap());
            prop_assert!(d >= 0.0);
            let oracle: f64 = a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!((d - oracle).abs() < 1e-9);
            prop_assert_eq!(d == 0.0, a == b);
        }
    }
}
