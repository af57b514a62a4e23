//! Losses, augmentation and the staged training schedule.

mod augment;
mod losses;
mod schedule;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::nets::{ArchConfig, NetError, Variant};
use crate::tensor::TensorError;

pub use augment::{augment, AugmentDraw};
pub use losses::{
    composite_loss_stage12, composite_loss_stage3, loss_df, loss_dme, loss_wd, weight_map, weighted_sum,
};
pub use schedule::{run_schedule, train_stage, Checkpoint, Schedule};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("defocus map of sample {sample} is zero everywhere (no blur), weight map undefined")]
    DegenerateMap { sample: usize },
    #[error("crop size {crop} does not fit a {width}x{height} image")]
    CropTooLarge { crop: usize, height: usize, width: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training images differ in size: {0}")]
    MixedSizes(String),
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleMode {
    ThreeStage,
    EndToEnd,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::ThreeStage => "three_stage",
            ScheduleMode::EndToEnd => "end_to_end",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "three_stage" => Ok(ScheduleMode::ThreeStage),
            "end_to_end" => Ok(ScheduleMode::EndToEnd),
            _ => Err(format!("unknown schedule `{s}` (expected three_stage or end_to_end)")),
        }
    }
}

/// Training phase. `EndToEnd` is the single-phase ablation schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    One,
    Two,
    Three,
    EndToEnd,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::One => "1",
            Stage::Two => "2",
            Stage::Three => "3",
            Stage::EndToEnd => "e2e",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Three => 3,
            Stage::EndToEnd => 4,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(Stage::One),
            "2" => Ok(Stage::Two),
            "3" => Ok(Stage::Three),
            "e2e" => Ok(Stage::EndToEnd),
            _ => Err(format!("unknown stage `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epochs: [usize; 3],
    pub batch_size: usize,
    pub crop_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
    pub arch: ArchConfig,
    pub flips: bool,
    pub rotations: bool,
    pub schedule: ScheduleMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 0.9,
            lambda3: 0.1,
            epochs: [40, 20, 40],
            batch_size: 8,
            crop_size: 64,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            variant: Variant::SftDec,
            arch: ArchConfig::default(),
            flips: true,
            rotations: true,
            schedule: ScheduleMode::ThreeStage,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.crop_size == 0 {
            return bad("crop_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if self.arch.dme_channels == 0 || self.arch.deblur_channels == 0 {
            return bad("network widths must be positive".into());
        }
        if self.arch.cond_channels == 0 && self.variant.is_modulated() {
            return bad("cond_channels must be positive for modulated variants".into());
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs.iter().sum()
    }
}

/// Epoch-mean losses of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based, counted across stages.
    pub epoch: usize,
    pub stage: Stage,
    pub l_dme: f64,
    pub l_df: f64,
    pub l_wd: f64,
    pub loss: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn last_of(&self, stage: Stage) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.stage == stage)
    }
}

/// SplitMix64 finalizer over a sequence of words.
pub(crate) fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mut z = base;
    for &w in words {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(w);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
