//! Image and defocus-map quality metrics, computed in `f64`.

use thiserror::Error;

use crate::dataset::Triplet;
use crate::image::{DefocusMap, Image, CHANNELS};
use crate::nets::{ModelParams, NetError};
use crate::par;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{what}: {lhs:?} vs {rhs:?} dimensions differ")]
    SizeMismatch { what: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("triplet `{0}`: {1}")]
    Restore(String, String),
}

fn check(what: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Result<(), MetricError> {
    if lhs != rhs {
        return Err(MetricError::SizeMismatch { what, lhs, rhs });
    }
    Ok(())
}

fn mean_abs(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64
}

fn mean_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64
}

pub fn mae(a: &DefocusMap, b: &DefocusMap) -> Result<f64, MetricError> {
    check("mae", (a.width, a.height), (b.width, b.height))?;
    Ok(mean_abs(&a.data, &b.data))
}

pub fn mse(a: &DefocusMap, b: &DefocusMap) -> Result<f64, MetricError> {
    check("mse", (a.width, a.height), (b.width, b.height))?;
    Ok(mean_sq(&a.data, &b.data))
}

/// Mean squared error over all channels of two images.
pub fn image_mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check("image mse", (a.width, a.height), (b.width, b.height))?;
    Ok(mean_sq(&a.data, &b.data))
}

/// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(image_mse(a, b)?, 1.0))
}

fn ssim_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of a `w x h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, &kv)| kv * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, &kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM of one channel plane (dynamic range 1).
pub fn ssim_plane(a: &[f32], b: &[f32], width: usize, height: usize) -> f64 {
    let k = ssim_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let x: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(&x, width, height, &k);
    let my = filter_valid(&y, width, height, &k);
    let mxx = filter_valid(&prod(&x, &x), width, height, &k);
    let myy = filter_valid(&prod(&y, &y), width, height, &k);
    let mxy = filter_valid(&prod(&x, &y), width, height, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// SSIM averaged over the colour channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check("ssim", (a.width, a.height), (b.width, b.height))?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricError::TooSmall(a.width, a.height));
    }
    let total: f64 = (0..CHANNELS).map(|c| ssim_plane(a.plane(c), b.plane(c), a.width, a.height)).sum();
    Ok(total / CHANNELS as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub mae_dm: f64,
    pub mse_dm: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricMeans {
    pub psnr: f64,
    pub ssim: f64,
    pub mae_dm: f64,
    pub mse_dm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub checkpoint: String,
    pub dataset: String,
    pub variant: String,
    pub means: MetricMeans,
    pub records: Vec<ImageRecord>,
}

impl EvalReport {
    pub fn from_records(checkpoint: String, dataset: String, variant: String, records: Vec<ImageRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let avg = |f: fn(&ImageRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let means = MetricMeans {
            psnr: avg(|r| r.psnr),
            ssim: avg(|r| r.ssim),
            mae_dm: avg(|r| r.mae_dm),
            mse_dm: avg(|r| r.mse_dm),
        };
        Self { checkpoint, dataset, variant, means, records }
    }
}

/// Anything that maps a blurry image to `(estimated map, restored image)`.
pub trait Restorer: Sync {
    fn restore(&self, blurry: &Image) -> Result<(DefocusMap, Image), String>;
}

/// Returns the input unchanged with an all-zero map.
pub struct IdentityRestorer;

impl Restorer for IdentityRestorer {
    fn restore(&self, blurry: &Image) -> Result<(DefocusMap, Image), String> {
        Ok((DefocusMap::constant(blurry.width, blurry.height, 0.0), blurry.clone()))
    }
}

impl Restorer for ModelParams<f32> {
    fn restore(&self, blurry: &Image) -> Result<(DefocusMap, Image), String> {
        let (map, out) = self.infer(&blurry.to_tensor()).map_err(|e: NetError| e.to_string())?;
        let map = DefocusMap::from_tensor(&map).map_err(|e| e.to_string())?;
        let img = Image::from_tensor(&out).map_err(|e| e.to_string())?;
        Ok((map, img))
    }
}

pub fn evaluate_triplet(t: &Triplet, restorer: &dyn Restorer) -> Result<ImageRecord, MetricError> {
    let (map, restored) = restorer.restore(&t.blurry).map_err(|e| MetricError::Restore(t.id.clone(), e))?;
    Ok(ImageRecord {
        id: t.id.clone(),
        psnr: psnr(&restored, &t.sharp)?,
        ssim: ssim(&restored, &t.sharp)?,
        mae_dm: mae(&map, &t.map)?,
        mse_dm: mse(&map, &t.map)?,
    })
}

/// Restores every triplet's blurry image and scores it against the ground truth.
pub fn evaluate(
    data: &[Triplet],
    restorer: &dyn Restorer,
    checkpoint: &str,
    dataset: &str,
    variant: &str,
) -> Result<EvalReport, MetricError> {
    let records = par::try_map_range(data.len(), |i| evaluate_triplet(&data[i], restorer))?;
    Ok(EvalReport::from_records(checkpoint.into(), dataset.into(), variant.into(), records))
}
