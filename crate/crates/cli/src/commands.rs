use std::path::{Path, PathBuf};

use defocus_core::blur::BlurConfig;
use defocus_core::checks::run_gradient_suite;
use defocus_core::dataset::{default_holdout, load_dataset, manifest_path, split_holdout, synth_dataset, Triplet};
use defocus_core::formats::{
    format_log, format_record, format_report, parse_config, read_checkpoint, write_checkpoint, write_dmf, RunConfig,
};
use defocus_core::image::Image;
use defocus_core::metrics::{evaluate, EvalReport, Restorer};
use defocus_core::nets::Variant;
use defocus_core::tensor::gradcheck::TOLERANCE;
use defocus_core::train::{run_schedule, Schedule, ScheduleMode, TrainingConfig};

use crate::error::CliError;
use crate::{AblateArgs, EvalArgs, GradcheckArgs, InferArgs, SynthArgs, TrainArgs};

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("bad --size `{s}`: expected WIDTHxHEIGHT, e.g. 64x64"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h) = (w.parse::<usize>().map_err(|_| bad())?, h.parse::<usize>().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let (w, h) = parse_size(&a.size)?;
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let cfg = BlurConfig {
        sigma_max: a.sigma_max,
        noise_sigma: a.noise_sigma,
        quantization_levels: a.levels,
        map_model: a.map_model,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = synth_dataset(a.count, w, h, &cfg, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn train_run(data: &[Triplet], cfg: &TrainingConfig, quiet: bool) -> Result<Schedule, CliError> {
    let mut progress = |r: &defocus_core::train::EpochRecord| {
        if !quiet {
            println!("{}", format_record(r));
        }
    };
    Ok(run_schedule(data, cfg, &mut progress)?)
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.variant {
        cfg.train.variant = v;
    }
    if let Some(s) = a.schedule {
        cfg.train.schedule = s;
    }
    let data = load_dataset(&a.data)?;
    let schedule = train_run(&data.triplets, &cfg.train, a.quiet)?;
    for ck in &schedule.checkpoints {
        let path = with_suffix(&a.out, ck.suffix());
        write_checkpoint(&path, &ck.params)?;
        println!("wrote {}", path.display());
    }
    write_text(&with_suffix(&a.out, "log"), &format_log(&schedule.log))
}

fn print_means(r: &EvalReport) {
    let m = &r.means;
    println!("psnr   {:.4} dB", m.psnr);
    println!("ssim   {:.4}", m.ssim);
    println!("mae_dm {:.4}", m.mae_dm);
    println!("mse_dm {:.4}", m.mse_dm);
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let params = read_checkpoint(&a.ckpt)?;
    let data = load_dataset(&a.data)?;
    let report = evaluate(
        &data.triplets,
        &params,
        &a.ckpt.display().to_string(),
        &manifest_path(&a.data).display().to_string(),
        params.variant.name(),
    )?;
    write_text(&a.report, &format_report(&report))?;
    print_means(&report);
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    let params = read_checkpoint(&a.ckpt)?;
    let input = Image::load_png(&a.input).map_err(|e| CliError::Data(e.to_string()))?;
    let (map, out) = params.restore(&input).map_err(CliError::Data)?;
    out.save_png(&a.out).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(p) = &a.dump_map {
        write_dmf(p, &map)?;
    }
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let data = load_dataset(&a.data)?;
    let (train_set, held) = match &a.eval_data {
        Some(p) => (data.triplets, load_dataset(p)?.triplets),
        None => {
            let n = data.triplets.len();
            split_holdout(data.triplets, default_holdout(n))
        }
    };
    if held.is_empty() {
        return Err(CliError::Data("need at least two triplets to hold one out for evaluation".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;

    let mut runs: Vec<(Variant, ScheduleMode)> = Variant::ALL.iter().map(|&v| (v, ScheduleMode::ThreeStage)).collect();
    runs.push((Variant::SftDec, ScheduleMode::EndToEnd));
    let mut rows = Vec::new();
    for (variant, schedule) in runs {
        let tc = TrainingConfig { variant, schedule, ..cfg.train.clone() };
        if !a.quiet {
            println!("# training {variant} ({schedule})");
        }
        let result = train_run(&train_set, &tc, a.quiet)?;
        let prefix = a.out.join(variant.name());
        write_text(&with_suffix(&prefix, &format!("{schedule}.log")), &format_log(&result.log))?;
        for ck in &result.checkpoints {
            let path = with_suffix(&prefix, ck.suffix());
            write_checkpoint(&path, &ck.params)?;
            let report = evaluate(&held, &ck.params, &path.display().to_string(), "held-out", variant.name())?;
            write_text(&with_suffix(&path, "report"), &format_report(&report))?;
            rows.push((variant, ck.stage.label(), report.means.psnr, report.means.ssim));
        }
    }
    let mut table = format!("{:<10} {:<6} {:>9} {:>7}\n", "variant", "stage", "psnr", "ssim");
    for (v, stage, p, s) in &rows {
        table.push_str(&format!("{:<10} {:<6} {:>9.4} {:>7.4}\n", v.name(), stage, p, s));
    }
    write_text(&a.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let outcomes =
        run_gradient_suite(a.seed, a.inject_fault.as_deref()).map_err(|e| CliError::Check(e.to_string()))?;
    let mut failed = 0;
    for o in &outcomes {
        let ok = o.report.passes(TOLERANCE);
        failed += usize::from(!ok);
        println!("{:<28} max_rel_err {:.3e}  {}", o.name, o.report.max_rel_error, if ok { "ok" } else { "FAIL" });
    }
    println!("{} checks, {} failed (tolerance {:e})", outcomes.len(), failed, TOLERANCE);
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} gradient checks exceeded the tolerance")));
    }
    Ok(())
}
