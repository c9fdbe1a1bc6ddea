//! Sentiment transfer with polarity-aware denoising.
//!
//! The pipeline rewrites a sentence into the opposite sentiment while keeping
//! its sentiment-independent content: the source sentence is translated into
//! an intermediate language, optionally corrupted by deleting or masking
//! general and/or polarity words, encoded into a shared latent representation,
//! and decoded with the decoder trained for the target sentiment.
//!
//! The crate is self-contained: a small tape-based reverse-mode autodiff
//! engine ([`autodiff`]) trains the transformer models ([`model`]), and
//! [`metrics`] provides the automatic evaluation battery, including the
//! polarity-masked MaskBLEU and MaskSim scores.

pub mod autodiff;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod model;
pub mod noising;
pub mod text;
pub mod translate;

pub use error::{Error, Result};

/// Derives a per-stage RNG seed from one root seed, so that every pipeline
/// stage gets an independent deterministic stream.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name, mixed with the root via splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
