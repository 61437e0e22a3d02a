//! Adaptive instance normalization: re-standardize each channel of a feature
//! map to a target mean and standard deviation.

use crate::error::{Error, Result};
use crate::features::{style_of, FeatureMap, StyleVector, STYLE_EPS};
use crate::ffs::BaseDomainSet;
use crate::image::Image;

/// `target.sigma · (x − mu(x)) / sigma(x) + target.mu`, per channel, with
/// the content statistics taken from [`style_of`] at `eps`.
pub fn adain_transfer(content: &FeatureMap, target: &StyleVector, eps: f64) -> Result<FeatureMap> {
    if content.channels() != target.channels() {
        return Err(Error::param(format!(
            "feature map has {} channels, target style has {}",
            content.channels(),
            target.channels()
        )));
    }
    let own = style_of(content, eps)?;
    let plane = content.height() * content.width();
    let mut out = Vec::with_capacity(content.data().len());
    for c in 0..content.channels() {
        let scale = target.sigma[c] / own.sigma[c];
        let (mu, tmu) = (own.mu[c], target.mu[c]);
        out.extend(content.plane(c).iter().map(|&v| scale * (v - mu) + tmu));
    }
    debug_assert_eq!(out.len(), content.channels() * plane);
    FeatureMap::new(content.channels(), content.height(), content.width(), out)
}

/// One stylized feature map and the base domain whose style it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Stylized {
    pub source: usize,
    pub domain: usize,
    pub features: FeatureMap,
}

/// Every feature map rendered in every base style, ordered source-major.
pub fn stylize_corpus(features: &[FeatureMap], base: &BaseDomainSet) -> Result<Vec<Stylized>> {
    let mut out = Vec::with_capacity(features.len() * base.k());
    for_each_stylized(features, base, |source, domain, fm| {
        out.push(Stylized {
            source,
            domain,
            features: fm,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Streaming form of [`stylize_corpus`]; `sink` receives `(source, domain,
/// map)` in the same order without the whole grid being held in memory.
pub fn for_each_stylized<F>(features: &[FeatureMap], base: &BaseDomainSet, mut sink: F) -> Result<()>
where
    F: FnMut(usize, usize, FeatureMap) -> Result<()>,
{
    if features.is_empty() {
        return Err(Error::param("no feature maps to stylize"));
    }
    if base.k() == 0 {
        return Err(Error::param("empty base domain set"));
    }
    for (i, fm) in features.iter().enumerate() {
        for (k, style) in base.styles.iter().enumerate() {
            sink(i, k, adain_transfer(fm, style, STYLE_EPS)?)?;
        }
    }
    Ok(())
}

/// Pixel-space statistic transfer, clamped to `[0, 1]`.
pub fn pixel_adain(img: &Image, style_img: &Image) -> Result<Image> {
    Image::from_clamped(
        img.height(),
        img.width(),
        img.channels(),
        pixel_adain_unclamped(img, style_img)?,
    )
}

/// [`pixel_adain`] before clamping, as a channel-last buffer.
pub fn pixel_adain_unclamped(img: &Image, style_img: &Image) -> Result<Vec<f64>> {
    if img.channels() != style_img.channels() {
        return Err(Error::param("content and style images differ in channel count"));
    }
    let as_map = |im: &Image| {
        let planes: Vec<f64> = (0..im.channels()).flat_map(|c| im.channel(c)).collect();
        FeatureMap::new(im.channels(), im.height(), im.width(), planes)
    };
    let target = style_of(&as_map(style_img)?, STYLE_EPS)?;
    let moved = adain_transfer(&as_map(img)?, &target, STYLE_EPS)?;
    let plane = img.height() * img.width();
    let c = img.channels();
    let mut out = vec![0.0; plane * c];
    for ch in 0..c {
        for (i, &v) in moved.plane(ch).iter().enumerate() {
            out[i * c + ch] = v;
        }
    }
    Ok(out)
}
