use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and training-variant selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One encoder and one decoder; the target sentiment is selected by the
    /// `<pos>`/`<neg>` output start token.
    StyleTok,
    /// Two fully separate transformers, one per sentiment.
    TwoSep,
    /// One shared encoder, two sentiment-specific decoders.
    SharedEncTwoDec,
    /// Shared encoder + two decoders, with the encoder pretrained on
    /// general-domain data (no noise).
    PretrainedEnc,
    /// Pretrained encoder plus polarity-aware denoising, per a noise spec.
    Denoised,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::StyleTok,
        Variant::TwoSep,
        Variant::SharedEncTwoDec,
        Variant::PretrainedEnc,
        Variant::Denoised,
    ];

    /// Variants whose encoder is pretrained on general-domain data.
    pub fn uses_pretraining(self) -> bool {
        matches!(self, Variant::PretrainedEnc | Variant::Denoised)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::StyleTok => "style_tok",
            Variant::TwoSep => "two_sep",
            Variant::SharedEncTwoDec => "shared_enc_two_dec",
            Variant::PretrainedEnc => "pretrained_enc",
            Variant::Denoised => "denoised",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub variant: Variant,
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: runs the full suite on a CPU in minutes.
    pub fn desk(variant: Variant, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            d_model: 64,
            d_ff: 256,
            vocab_size,
            max_len: 32,
            variant,
            dropout: 0.0,
        }
    }

    /// Full-scale preset: 4 layers, 8 heads, width 512.
    pub fn paper_scale(variant: Variant, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: 4,
            heads: 8,
            d_model: 512,
            d_ff: 2048,
            vocab_size,
            max_len: 128,
            variant,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        if self.layers == 0 || self.d_ff == 0 {
            return Err(Error::Config("layers and d_ff must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("no_such".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::desk(Variant::SharedEncTwoDec, 100);
        c.validate().unwrap();
        c.heads = 3; // 64 % 3 != 0
        assert!(c.validate().is_err());
        c = ModelConfig::desk(Variant::SharedEncTwoDec, 100);
        c.max_len = 1;
        assert!(c.validate().is_err());
    }
}
