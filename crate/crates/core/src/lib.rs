//! Pseudo domain labels for domain-generalized training.
//!
//! The pipeline picks mutually distant reference styles by farthest feature
//! sampling, renders the corpus in each of them with AdaIN, trains a small
//! domain classifier on the result, and uses its soft outputs as targets for
//! a gradient-reversal domain discriminator. A low-frequency DCT blend
//! (SCG*) optionally widens the style distribution first.

pub mod adain;
pub mod dal;
pub mod dct;
pub mod dsp;
pub mod error;
pub mod features;
pub mod ffs;
pub mod harness;
pub mod image;
pub mod label;
pub mod mlp;
pub mod scg;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use features::{FeatureMap, FilterBank, StyleVector};
pub use ffs::{BaseDomainSet, Start};
pub use image::Image;
pub use label::SoftDomainLabel;
