use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Which transformer stack receives the gated vision-text adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionSite {
    Encoder,
    Decoder,
    Both,
}

impl InsertionSite {
    pub fn includes_encoder(self) -> bool {
        matches!(self, InsertionSite::Encoder | InsertionSite::Both)
    }
    pub fn includes_decoder(self) -> bool {
        matches!(self, InsertionSite::Decoder | InsertionSite::Both)
    }
}

impl FromStr for InsertionSite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(InsertionSite::Encoder),
            "decoder" => Ok(InsertionSite::Decoder),
            "both" => Ok(InsertionSite::Both),
            other => Err(Error::config(format!(
                "insertion_site must be encoder|decoder|both, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for InsertionSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InsertionSite::Encoder => "encoder",
            InsertionSite::Decoder => "decoder",
            InsertionSite::Both => "both",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding size shared by text and vision tokens.
    #[serde(default = "d_default")]
    pub d: usize,
    /// Vocabulary size.
    #[serde(default = "vocab_default")]
    pub vocab_size: usize,
    #[serde(default = "layers_default")]
    pub n_enc: usize,
    #[serde(default = "layers_default")]
    pub n_dec: usize,
    /// Attention heads of the base transformer.
    #[serde(default = "heads_default")]
    pub heads: usize,
    #[serde(default = "d_ff_default")]
    pub d_ff: usize,
    /// Length of one cached vision encoding vector.
    #[serde(default = "vision_dim_default")]
    pub vision_dim: usize,
    /// Latent query count of the perceiver resampler.
    #[serde(default = "latents_default")]
    pub latents: usize,
    /// Stacked resampler layers.
    #[serde(default = "resampler_depth_default")]
    pub resampler_depth: usize,
    /// Heads of the added vision-text layers.
    #[serde(default = "heads_default")]
    pub heads_vt: usize,
    #[serde(default = "d_ff_default")]
    pub d_ff_vt: usize,
    #[serde(default = "site_default")]
    pub insertion_site: InsertionSite,
    #[serde(default = "max_len_default")]
    pub max_len: usize,
}

fn d_default() -> usize {
    64
}
fn vocab_default() -> usize {
    100
}
fn layers_default() -> usize {
    2
}
fn heads_default() -> usize {
    4
}
fn d_ff_default() -> usize {
    128
}
fn vision_dim_default() -> usize {
    32
}
fn latents_default() -> usize {
    8
}
fn resampler_depth_default() -> usize {
    2
}
fn site_default() -> InsertionSite {
    InsertionSite::Encoder
}
fn max_len_default() -> usize {
    64
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: d_default(),
            vocab_size: vocab_default(),
            n_enc: layers_default(),
            n_dec: layers_default(),
            heads: heads_default(),
            d_ff: d_ff_default(),
            vision_dim: vision_dim_default(),
            latents: latents_default(),
            resampler_depth: resampler_depth_default(),
            heads_vt: heads_default(),
            d_ff_vt: d_ff_default(),
            insertion_site: site_default(),
            max_len: max_len_default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % self.heads != 0 {
            return Err(Error::config(format!(
                "d={} must be a positive multiple of heads={}",
                self.d, self.heads
            )));
        }
        if self.d % self.heads_vt != 0 {
            return Err(Error::config(format!(
                "d={} must be divisible by heads_vt={}",
                self.d, self.heads_vt
            )));
        }
        if self.latents == 0 {
            return Err(Error::config("latents must be >= 1"));
        }
        if self.resampler_depth == 0 {
            return Err(Error::config("resampler_depth must be >= 1"));
        }
        if self.vocab_size < 5 {
            return Err(Error::config("vocab_size must cover the reserved tokens"));
        }
        if self.n_enc == 0 || self.n_dec == 0 || self.max_len == 0 {
            return Err(Error::config("layer counts and max_len must be >= 1"));
        }
        Ok(())
    }

    /// Number of adapter layers implied by the insertion site.
    pub fn adapter_count(&self) -> usize {
        let mut n = 0;
        if self.insertion_site.includes_encoder() {
            n += self.n_enc;
        }
        if self.insertion_site.includes_decoder() {
            n += self.n_dec;
        }
        n
    }
}
