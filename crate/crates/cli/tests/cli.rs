use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use defocus_core::formats::{parse_report, read_checkpoint, read_dmf, serialize_config, write_checkpoint, RunConfig};
use defocus_core::image::Image;
use defocus_core::nets::{ArchConfig, ModelParams, Variant};
use defocus_core::train::TrainingConfig;

fn defocus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defocus")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, size: &str, seed: u64) {
    let o = defocus(&["synth", "--out", p(dir), "--count", &count.to_string(), "--size", size, "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn write_config(dir: &Path, epochs: [usize; 3]) -> PathBuf {
    let cfg = RunConfig {
        train: TrainingConfig {
            epochs,
            batch_size: 2,
            crop_size: 16,
            learning_rate: 1e-3,
            arch: ArchConfig::tiny(),
            ..Default::default()
        },
        ..Default::default()
    };
    let path = dir.join("run.cfg");
    fs::write(&path, serialize_config(&cfg)).unwrap();
    path
}

#[test]
fn synth_writes_the_requested_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let o = defocus(&["synth", "--out", p(&data), "--count", "4", "--size", "24x16", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), p(&data.join("manifest.txt")));
    for i in 0..4 {
        let img = Image::load_png(&data.join(format!("blurry_{i:04}.png"))).unwrap();
        assert_eq!((img.width, img.height), (24, 16));
        let map = read_dmf(&data.join(format!("map_{i:04}.dmf"))).unwrap();
        assert_eq!((map.width, map.height), (24, 16));
    }
    let again = dir.path().join("e");
    synth(&again, 4, "24x16", 3);
    for i in 0..4 {
        let f = format!("map_{i:04}.dmf");
        assert_eq!(fs::read(data.join(&f)).unwrap(), fs::read(again.join(&f)).unwrap());
    }
}

#[test]
fn bad_size_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = defocus(&["synth", "--out", p(dir.path()), "--count", "1", "--size", "64by64"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("64by64"), "{}", stderr(&o));
}

#[test]
fn zero_epoch_training_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 3, "16x16", 0);
    let cfg = write_config(dir.path(), [0, 0, 0]);
    let prefix = dir.path().join("m");
    let o = defocus(&["train", "--data", p(&data), "--config", p(&cfg), "--variant", "sft", "--out", p(&prefix), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let init = ModelParams::<f32>::init(ArchConfig::tiny(), Variant::Sft, 0);
    for s in ["s1", "s2", "s3"] {
        assert_eq!(read_checkpoint(&dir.path().join(format!("m.{s}"))).unwrap(), init);
    }
}

#[test]
fn training_logs_epochs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 3, "16x16", 1);
    let cfg = write_config(dir.path(), [1, 1, 1]);
    let run = |name: &str| {
        let prefix = dir.path().join(name);
        let o = defocus(&["--threads", "1", "train", "--data", p(&data), "--config", p(&cfg), "--out", p(&prefix)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("epoch=")).count(), 3);
        prefix
    };
    let (a, b) = (run("a"), run("b"));
    let log = fs::read_to_string(a.with_extension("log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().all(|l| l.contains(" l_dme=") && l.contains(" loss=")));
    assert_eq!(fs::read(a.with_extension("s3")).unwrap(), fs::read(b.with_extension("s3")).unwrap());
}

#[test]
fn end_to_end_writes_one_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 2, "16x16", 2);
    let cfg = write_config(dir.path(), [1, 0, 1]);
    let prefix = dir.path().join("m");
    let o = defocus(&[
        "train", "--data", p(&data), "--config", p(&cfg), "--schedule", "end_to_end", "--out", p(&prefix), "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("m.e2e").exists());
    for s in ["s1", "s2", "s3"] {
        assert!(!dir.path().join(format!("m.{s}")).exists());
    }
}

#[test]
fn config_errors_cite_lines_and_variants_are_enumerated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 2, "16x16", 0);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "lambda1 = 0.2\nlamda2 = 0.9\n").unwrap();
    let o = defocus(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&dir.path().join("m"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2") && stderr(&o).contains("lamda2"), "{}", stderr(&o));

    let o = defocus(&["train", "--data", p(&data), "--variant", "sft_fancy", "--out", p(&dir.path().join("m"))]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(["baseline", "sft", "sft_dec", "sft_fdec"].iter().all(|v| err.contains(v)), "{err}");
}

fn zero_checkpoint(dir: &Path) -> PathBuf {
    let path = dir.join("zero.s3");
    write_checkpoint(&path, &ModelParams::<f32>::zeros(ArchConfig::tiny(), Variant::SftDec)).unwrap();
    path
}

#[test]
fn eval_report_means_follow_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 3, "16x16", 4);
    let ckpt = zero_checkpoint(dir.path());
    let report = dir.path().join("r.txt");
    let o = defocus(&["eval", "--data", p(&data), "--ckpt", p(&ckpt), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let parsed = parse_report(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.records.len(), 3);
    let mean = |f: &dyn Fn(&defocus_core::metrics::ImageRecord) -> f64| parsed.records.iter().map(f).sum::<f64>() / 3.0;
    assert!((parsed.means.psnr - mean(&|r| r.psnr)).abs() < 1e-6);
    assert!((parsed.means.ssim - mean(&|r| r.ssim)).abs() < 1e-6);
    assert!((parsed.means.mae_dm - mean(&|r| r.mae_dm)).abs() < 1e-6);
    assert!((parsed.means.mse_dm - mean(&|r| r.mse_dm)).abs() < 1e-6);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for key in ["psnr", "ssim", "mae_dm", "mse_dm"] {
        assert!(stdout.contains(key), "{stdout}");
    }
}

#[test]
fn eval_reports_missing_and_corrupt_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 2, "16x16", 5);
    let ckpt = zero_checkpoint(dir.path());
    let report = dir.path().join("r.txt");

    fs::remove_file(data.join("sharp_0001.png")).unwrap();
    let o = defocus(&["eval", "--data", p(&data), "--ckpt", p(&ckpt), "--report", p(&report)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sharp_0001.png"), "{}", stderr(&o));

    synth(&data, 2, "16x16", 5);
    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&ckpt, bytes).unwrap();
    let o = defocus(&["eval", "--data", p(&data), "--ckpt", p(&ckpt), "--report", p(&report)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).to_lowercase().contains("crc"), "{}", stderr(&o));
}

#[test]
fn infer_with_zero_weights_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    synth(&data, 1, "20x12", 6);
    let ckpt = zero_checkpoint(dir.path());
    let input = data.join("blurry_0000.png");
    let out = dir.path().join("out.png");
    let map = dir.path().join("out.dmf");
    let o = defocus(&["infer", "--input", p(&input), "--ckpt", p(&ckpt), "--out", p(&out), "--dump-map", p(&map)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(Image::load_png(&out).unwrap(), Image::load_png(&input).unwrap());
    let m = read_dmf(&map).unwrap();
    assert_eq!((m.width, m.height), (20, 12));
    assert!(m.data.iter().all(|&v| v >= 0.0));

    let o = defocus(&["infer", "--input", p(&map), "--ckpt", p(&ckpt), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_passes_and_catches_an_injected_fault() {
    let o = defocus(&["gradcheck"]);
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(code(&o), 0, "{stdout}");
    let names: Vec<&str> = stdout.lines().filter(|l| l.contains("max_rel_err")).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert!(names.len() > 20);
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len());

    let o = defocus(&["gradcheck", "--inject-fault", "conv2d_3x3"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("conv2d_3x3") && l.ends_with("FAIL")));
}
