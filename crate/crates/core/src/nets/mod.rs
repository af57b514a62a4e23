//! Defocus map estimation, condition and deblurring networks.
//!
//! Parameters live in a [`ModelParams`] keyed by dotted names (`dme.*`,
//! `cond.*`, `deblur.*`). A forward pass binds them onto a [`Graph`] as leaves
//! and builds the network on that tape.

mod layers;
mod params;
mod subnets;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::TensorError;

pub use layers::{conditioned_resblock, generate_sft_params, plain_resblock, sft_apply, SftParams};
pub use params::{BoundParams, ModelParams};
pub use subnets::{condition_forward, deblur_forward, dme_forward, full_forward, ForwardOutput, MapSource};

/// Slope of every hidden leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("non-finite values in parameter `{0}`")]
    NonFinite(String),
    #[error("{what}: spatial size {lhs:?} does not match {rhs:?}")]
    Misaligned { what: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("variant `{0}` has no feature modulation")]
    NoModulation(Variant),
    #[error("ground-truth map source needs a defocus map")]
    MissingMap,
}

/// Ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Defocus map concatenated onto the features at every block input.
    Baseline,
    /// Full-resolution SFT: gamma and beta from convolution heads.
    Sft,
    /// SFT with gamma decomposed into channel and spatial factors.
    SftDec,
    /// SFT with both gamma and beta decomposed.
    SftFdec,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Sft, Variant::SftDec, Variant::SftFdec];

    pub fn id(self) -> u32 {
        match self {
            Variant::Baseline => 0,
            Variant::Sft => 1,
            Variant::SftDec => 2,
            Variant::SftFdec => 3,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Sft => "sft",
            Variant::SftDec => "sft_dec",
            Variant::SftFdec => "sft_fdec",
        }
    }

    pub fn is_modulated(self) -> bool {
        self != Variant::Baseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected one of: baseline, sft, sft_dec, sft_fdec)"))
    }
}

/// Channel widths and block counts. All kernels are 3x3 except the 1x1
/// channel branch of the decomposition transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub dme_channels: usize,
    pub dme_blocks: usize,
    pub cond_channels: usize,
    pub deblur_channels: usize,
    pub deblur_blocks: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { dme_channels: 32, dme_blocks: 4, cond_channels: 32, deblur_channels: 64, deblur_blocks: 6 }
    }
}

impl ArchConfig {
    /// Narrow network sized for single-core CPU training runs.
    pub fn compact() -> Self {
        Self { dme_channels: 8, dme_blocks: 4, cond_channels: 8, deblur_channels: 16, deblur_blocks: 2 }
    }

    /// Very small network used by gradient checks.
    pub fn tiny() -> Self {
        Self { dme_channels: 3, dme_blocks: 1, cond_channels: 2, deblur_channels: 3, deblur_blocks: 1 }
    }

    pub fn as_array(&self) -> [usize; 5] {
        [self.dme_channels, self.dme_blocks, self.cond_channels, self.deblur_channels, self.deblur_blocks]
    }

    pub fn from_array(a: [usize; 5]) -> Self {
        Self { dme_channels: a[0], dme_blocks: a[1], cond_channels: a[2], deblur_channels: a[3], deblur_blocks: a[4] }
    }
}
