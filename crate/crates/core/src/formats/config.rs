use std::collections::HashSet;
use std::fmt::Display;
use std::str::FromStr;

use super::FormatError;
use crate::blur::BlurConfig;
use crate::train::TrainingConfig;

/// Everything a training or ablation run needs besides the data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainingConfig,
    pub blur: BlurConfig,
}

/// `key = value` lines in a fixed order. `parse_config` inverts this exactly.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let b = &cfg.blur;
    let rows: Vec<(&str, String)> = vec![
        ("lambda1", t.lambda1.to_string()),
        ("lambda2", t.lambda2.to_string()),
        ("lambda3", t.lambda3.to_string()),
        ("epochs_stage1", t.epochs[0].to_string()),
        ("epochs_stage2", t.epochs[1].to_string()),
        ("epochs_stage3", t.epochs[2].to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("crop_size", t.crop_size.to_string()),
        ("learning_rate", t.learning_rate.to_string()),
        ("beta1", t.beta1.to_string()),
        ("beta2", t.beta2.to_string()),
        ("epsilon", t.epsilon.to_string()),
        ("seed", t.seed.to_string()),
        ("variant", t.variant.to_string()),
        ("schedule_mode", t.schedule.to_string()),
        ("flips", t.flips.to_string()),
        ("rotations", t.rotations.to_string()),
        ("dme_channels", t.arch.dme_channels.to_string()),
        ("dme_blocks", t.arch.dme_blocks.to_string()),
        ("cond_channels", t.arch.cond_channels.to_string()),
        ("deblur_channels", t.arch.deblur_channels.to_string()),
        ("deblur_blocks", t.arch.deblur_blocks.to_string()),
        ("sigma_max", b.sigma_max.to_string()),
        ("noise_sigma", b.noise_sigma.to_string()),
        ("quantization_levels", b.quantization_levels.to_string()),
        ("map_model", b.map_model.to_string()),
        ("blur_seed", b.seed.to_string()),
    ];
    rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, FormatError>
where
    T::Err: Display,
{
    raw.parse().map_err(|e| FormatError::Config { line, msg: format!("bad value `{raw}` for `{key}`: {e}") })
}

/// Parses config text on top of the defaults. Unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig, FormatError> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| FormatError::Config { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let (key, raw) = (key.trim(), raw.trim());
        if !seen.insert(key.to_string()) {
            return Err(FormatError::Config { line, msg: format!("duplicate key `{key}`") });
        }
        let t = &mut cfg.train;
        let b = &mut cfg.blur;
        match key {
            "lambda1" => t.lambda1 = value(line, key, raw)?,
            "lambda2" => t.lambda2 = value(line, key, raw)?,
            "lambda3" => t.lambda3 = value(line, key, raw)?,
            "epochs_stage1" => t.epochs[0] = value(line, key, raw)?,
            "epochs_stage2" => t.epochs[1] = value(line, key, raw)?,
            "epochs_stage3" => t.epochs[2] = value(line, key, raw)?,
            "batch_size" => t.batch_size = value(line, key, raw)?,
            "crop_size" => t.crop_size = value(line, key, raw)?,
            "learning_rate" => t.learning_rate = value(line, key, raw)?,
            "beta1" => t.beta1 = value(line, key, raw)?,
            "beta2" => t.beta2 = value(line, key, raw)?,
            "epsilon" => t.epsilon = value(line, key, raw)?,
            "seed" => t.seed = value(line, key, raw)?,
            "variant" => t.variant = value(line, key, raw)?,
            "schedule_mode" => t.schedule = value(line, key, raw)?,
            "flips" => t.flips = value(line, key, raw)?,
            "rotations" => t.rotations = value(line, key, raw)?,
            "dme_channels" => t.arch.dme_channels = value(line, key, raw)?,
            "dme_blocks" => t.arch.dme_blocks = value(line, key, raw)?,
            "cond_channels" => t.arch.cond_channels = value(line, key, raw)?,
            "deblur_channels" => t.arch.deblur_channels = value(line, key, raw)?,
            "deblur_blocks" => t.arch.deblur_blocks = value(line, key, raw)?,
            "sigma_max" => b.sigma_max = value(line, key, raw)?,
            "noise_sigma" => b.noise_sigma = value(line, key, raw)?,
            "quantization_levels" => b.quantization_levels = value(line, key, raw)?,
            "map_model" => b.map_model = value(line, key, raw)?,
            "blur_seed" => b.seed = value(line, key, raw)?,
            _ => return Err(FormatError::Config { line, msg: format!("unknown key `{key}`") }),
        }
    }
    cfg.train.validate().map_err(|e| FormatError::Config { line: 0, msg: e.to_string() })?;
    cfg.blur.validate().map_err(|e| FormatError::Config { line: 0, msg: e.to_string() })?;
    Ok(cfg)
}
