use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{composite_loss_stage12, composite_loss_stage3, loss_df, loss_dme, loss_wd};
use super::{augment, derive_seed, EpochRecord, ScheduleMode, Stage, TrainError, TrainLog, TrainingConfig};
use crate::dataset::Triplet;
use crate::nets::{dme_forward, full_forward, MapSource, ModelParams};
use crate::par;
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor};

/// Parameters emitted at the end of a stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub params: ModelParams<f32>,
}

impl Checkpoint {
    /// File suffix: `s1`, `s2`, `s3` or `e2e`.
    pub fn suffix(&self) -> &'static str {
        match self.stage {
            Stage::One => "s1",
            Stage::Two => "s2",
            Stage::Three => "s3",
            Stage::EndToEnd => "e2e",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub checkpoints: Vec<Checkpoint>,
    pub log: TrainLog,
}

struct Batch {
    sharp: Tensor<f32>,
    blurry: Tensor<f32>,
    map: Tensor<f32>,
}

fn assemble(samples: &[Triplet]) -> Result<Batch, TrainError> {
    let stack = |f: &dyn Fn(&Triplet) -> Tensor<f32>| -> Result<Tensor<f32>, TrainError> {
        let parts: Vec<Tensor<f32>> = samples.iter().map(f).collect();
        Ok(Tensor::stack_batch(&parts)?)
    };
    Ok(Batch {
        sharp: stack(&|t| t.sharp.to_tensor())?,
        blurry: stack(&|t| t.blurry.to_tensor())?,
        map: stack(&|t| t.map.to_tensor())?,
    })
}

struct StepLosses {
    l_dme: f64,
    l_df: f64,
    l_wd: f64,
    loss: f64,
}

fn train_step(
    stage: Stage,
    batch: &Batch,
    params: &mut ModelParams<f32>,
    adam: &mut AdamState<f32>,
    cfg: &TrainingConfig,
) -> Result<StepLosses, TrainError> {
    let mut g = Graph::new();
    let bp = params.bind(&mut g, true);
    let blurry = g.constant(batch.blurry.clone());
    let sharp = g.constant(batch.sharp.clone());
    let dm_gt = g.constant(batch.map.clone());

    let (out, dm_e) = if stage == Stage::One {
        let dm_e = dme_forward(&mut g, &bp, blurry)?;
        (full_forward(&mut g, &bp, blurry, MapSource::GroundTruth(dm_gt))?, dm_e)
    } else {
        let out = full_forward(&mut g, &bp, blurry, MapSource::Estimated)?;
        (out, out.estimated_map.expect("estimated source runs the estimator"))
    };
    let l_dme = loss_dme(&mut g, dm_e, dm_gt)?;
    let l_df = loss_df(&mut g, out.deblurred, sharp)?;
    let l_wd = loss_wd(&mut g, out.deblurred, sharp, &batch.map)?;
    let loss = if stage == Stage::Three {
        composite_loss_stage3(&mut g, cfg.lambda2, cfg.lambda3, l_df, l_wd)?
    } else {
        composite_loss_stage12(&mut g, cfg.lambda1, cfg.lambda2, l_dme, l_df)?
    };

    let value = |v| g.value(v).data()[0] as f64;
    let losses = StepLosses { l_dme: value(l_dme), l_df: value(l_df), l_wd: value(l_wd), loss: value(loss) };
    let mut grads = g.backward(loss)?;
    let grads: BTreeMap<String, Tensor<f32>> = bp.vars.iter().map(|(k, &v)| (k.clone(), grads.take(v))).collect();
    adam.step(&mut params.tensors, &grads)?;
    Ok(losses)
}

fn stage_epochs(stage: Stage, cfg: &TrainingConfig) -> usize {
    match stage {
        Stage::One => cfg.epochs[0],
        Stage::Two => cfg.epochs[1],
        Stage::Three => cfg.epochs[2],
        Stage::EndToEnd => cfg.total_epochs(),
    }
}

/// Runs one stage with a fresh Adam state, appending one record per epoch to `log`.
pub fn train_stage(
    stage: Stage,
    data: &[Triplet],
    params: &mut ModelParams<f32>,
    cfg: &TrainingConfig,
    log: &mut TrainLog,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut adam = AdamState::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
    });
    for local in 0..stage_epochs(stage, cfg) {
        let started = Instant::now();
        let epoch_key = [stage.salt(), local as u64];
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &epoch_key)));

        let mut sums = [0.0f64; 4];
        for chunk in order.chunks(cfg.batch_size) {
            let samples = par::try_map_range(chunk.len(), |j| {
                let i = chunk[j];
                let seed = derive_seed(cfg.seed, &[epoch_key[0], epoch_key[1], i as u64]);
                augment(&data[i], cfg.crop_size, cfg.flips, cfg.rotations, seed)
            })?;
            let batch = assemble(&samples)?;
            let s = train_step(stage, &batch, params, &mut adam, cfg)?;
            let n = chunk.len() as f64;
            for (acc, v) in sums.iter_mut().zip([s.l_dme, s.l_df, s.l_wd, s.loss]) {
                *acc += v * n;
            }
        }
        let n = data.len() as f64;
        let record = EpochRecord {
            epoch: log.records.len() + 1,
            stage,
            l_dme: sums[0] / n,
            l_df: sums[1] / n,
            l_wd: sums[2] / n,
            loss: sums[3] / n,
            wall_s: started.elapsed().as_secs_f64(),
        };
        if !record.loss.is_finite() {
            return Err(TrainError::Diverged { epoch: record.epoch });
        }
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(())
}

/// Three-stage or end-to-end training from a seeded initialization.
pub fn run_schedule(
    data: &[Triplet],
    cfg: &TrainingConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<Schedule, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (h, w) = (data[0].sharp.height, data[0].sharp.width);
    if cfg.crop_size > h || cfg.crop_size > w {
        return Err(TrainError::CropTooLarge { crop: cfg.crop_size, height: h, width: w });
    }
    let mut params = ModelParams::init(cfg.arch, cfg.variant, cfg.seed);
    let mut log = TrainLog::default();
    let mut checkpoints = Vec::new();
    let stages: &[Stage] = match cfg.schedule {
        ScheduleMode::ThreeStage => &[Stage::One, Stage::Two, Stage::Three],
        ScheduleMode::EndToEnd => &[Stage::EndToEnd],
    };
    for &stage in stages {
        train_stage(stage, data, &mut params, cfg, &mut log, on_epoch)?;
        checkpoints.push(Checkpoint { stage, params: params.clone() });
    }
    Ok(Schedule { checkpoints, log })
}
