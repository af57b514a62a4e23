//! Spatially varying Gaussian defocus blur `I_b = K * I_c + N` and synthetic scene content.
//!
//! Each output pixel gathers its neighbourhood with the Gaussian PSF of its own
//! sigma; borders are mirrored (`cba|abc|cba`). Kernel sums are paired
//! symmetrically around the centre so that mirroring the input and the map
//! mirrors the output bit for bit.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::image::{DefocusMap, Image, CHANNELS};

/// Below this sigma the PSF is a delta.
pub const MIN_SIGMA: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum BlurError {
    #[error("negative blur sigma {0}")]
    NegativeSigma(f64),
    #[error("image is {0}x{1} but defocus map is {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("invalid blur config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapModel {
    /// Smoothed white noise rescaled to `[0, sigma_max]`.
    GaussianField,
    /// `|a x + b y + c|` scaled by `sigma_max`: a tilted focal plane.
    TiltedPlane,
}

impl fmt::Display for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapModel::GaussianField => "gaussian_field",
            MapModel::TiltedPlane => "tilted_plane",
        })
    }
}

impl FromStr for MapModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian_field" => Ok(MapModel::GaussianField),
            "tilted_plane" => Ok(MapModel::TiltedPlane),
            _ => Err(format!("unknown map model `{s}` (expected gaussian_field or tilted_plane)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlurConfig {
    pub sigma_max: f64,
    pub noise_sigma: f64,
    pub quantization_levels: usize,
    pub map_model: MapModel,
    pub seed: u64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self { sigma_max: 3.0, noise_sigma: 0.002, quantization_levels: 16, map_model: MapModel::GaussianField, seed: 0 }
    }
}

impl BlurConfig {
    pub fn validate(&self) -> Result<(), BlurError> {
        if !(self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return Err(BlurError::Config(format!("sigma_max must be > 0, got {}", self.sigma_max)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(BlurError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.quantization_levels < 2 {
            return Err(BlurError::Config(format!("quantization_levels must be >= 2, got {}", self.quantization_levels)));
        }
        Ok(())
    }
}

/// Normalized isotropic 2-D Gaussian, `(2r+1)^2` row-major weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d {
    pub radius: usize,
    pub weights: Vec<f64>,
}

impl Kernel2d {
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[((dy + r) as usize) * self.size() + (dx + r) as usize]
    }
}

pub fn kernel_radius(sigma: f64) -> usize {
    if sigma < MIN_SIGMA {
        0
    } else {
        (3.0 * sigma).ceil() as usize
    }
}

pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2d, BlurError> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(BlurError::NegativeSigma(sigma));
    }
    let r = kernel_radius(sigma);
    if r == 0 {
        return Ok(Kernel2d { radius: 0, weights: vec![1.0] });
    }
    let ri = r as isize;
    let mut weights = Vec::with_capacity((2 * r + 1).pow(2));
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            weights.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Kernel2d { radius: r, weights })
}

/// Normalized 1-D Gaussian taps `k[0..=r]` (one side; `k[-d] == k[d]`).
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma);
    if r == 0 {
        return vec![1.0];
    }
    let half: Vec<f64> = (0..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    half.into_iter().map(|w| w / total).collect()
}

/// Mirrors an out-of-range index back into `0..n` (edge sample repeated).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn check_sizes(img: &Image, map: &DefocusMap) -> Result<(), BlurError> {
    if img.width != map.width || img.height != map.height {
        return Err(BlurError::SizeMismatch(img.width, img.height, map.width, map.height));
    }
    Ok(())
}

fn add_noise_and_clamp(out: &mut [f64], noise_sigma: f64, seed: u64) {
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("noise sigma validated");
        out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Per-pixel gather with the exact kernel of each destination pixel's sigma.
pub fn apply_blur_oracle(img: &Image, map: &DefocusMap, noise_sigma: f64, seed: u64) -> Result<Image, BlurError> {
    check_sizes(img, map)?;
    if noise_sigma < 0.0 {
        return Err(BlurError::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let (w, h) = (img.width, img.height);
    let mut kernels: HashMap<u32, Kernel2d> = HashMap::new();
    for &s in &map.data {
        if let std::collections::hash_map::Entry::Vacant(e) = kernels.entry(s.to_bits()) {
            e.insert(gaussian_kernel(s as f64)?);
        }
    }
    let mut out = vec![0.0f64; CHANNELS * w * h];
    for c in 0..CHANNELS {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let k = &kernels[&map.get(y, x).to_bits()];
                let r = k.radius as isize;
                let mut acc = 0.0;
                for dy in -r..=r {
                    let row = &plane[reflect(y as isize + dy, h) * w..][..w];
                    let mut racc = k.at(dy, 0) * row[x] as f64;
                    for d in 1..=r {
                        let pair = row[reflect(x as isize + d, w)] as f64 + row[reflect(x as isize - d, w)] as f64;
                        racc += k.at(dy, d) * pair;
                    }
                    acc += racc;
                }
                out[(c * h + y) * w + x] = acc;
            }
        }
    }
    add_noise_and_clamp(&mut out, noise_sigma, seed);
    Ok(Image::new(w, h, out.into_iter().map(|v| v as f32).collect()))
}

/// Separable whole-plane Gaussian blur with mirrored borders.
fn blur_plane(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    if taps.len() == 1 {
        return plane.to_vec();
    }
    let r = taps.len() - 1;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = taps[0] * row[x];
            for d in 1..=r {
                acc += taps[d] * (row[reflect(x as isize + d as isize, w)] + row[reflect(x as isize - d as isize, w)]);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = taps[0] * tmp[y * w + x];
            for d in 1..=r {
                acc += taps[d]
                    * (tmp[reflect(y as isize + d as isize, h) * w + x] + tmp[reflect(y as isize - d as isize, h) * w + x]);
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Blur levels spaced uniformly over `[0, sigma_max]`.
pub fn quantization_grid(cfg: &BlurConfig) -> Vec<f64> {
    let n = cfg.quantization_levels;
    (0..n).map(|l| cfg.sigma_max * l as f64 / (n - 1) as f64).collect()
}

/// Fast approximation: blur at each quantized sigma level, then per pixel
/// interpolate linearly between the two levels bracketing its sigma.
pub fn apply_spatially_varying_blur(img: &Image, map: &DefocusMap, cfg: &BlurConfig) -> Result<Image, BlurError> {
    check_sizes(img, map)?;
    cfg.validate()?;
    if let Some(&s) = map.data.iter().find(|s| **s < 0.0 || s.is_nan()) {
        return Err(BlurError::NegativeSigma(s as f64));
    }
    let (w, h) = (img.width, img.height);
    let grid = quantization_grid(cfg);
    let top = grid.len() - 1;
    // (lower level, fraction) per pixel
    let coords: Vec<(usize, f64)> = map
        .data
        .iter()
        .map(|&s| {
            let t = (s as f64 / cfg.sigma_max * top as f64).clamp(0.0, top as f64);
            let l0 = (t.floor() as usize).min(top);
            (l0, t - l0 as f64)
        })
        .collect();
    let mut needed = vec![false; grid.len()];
    for &(l0, f) in &coords {
        needed[l0] = true;
        if f > 0.0 {
            needed[(l0 + 1).min(top)] = true;
        }
    }
    let mut out = vec![0.0f64; CHANNELS * w * h];
    for c in 0..CHANNELS {
        let plane: Vec<f64> = img.plane(c).iter().map(|&v| v as f64).collect();
        let levels: Vec<Option<Vec<f64>>> = grid
            .iter()
            .zip(&needed)
            .map(|(&s, &n)| n.then(|| blur_plane(&plane, w, h, &gaussian_taps(s))))
            .collect();
        let dst = &mut out[c * w * h..(c + 1) * w * h];
        for (i, &(l0, f)) in coords.iter().enumerate() {
            let lo = levels[l0].as_ref().expect("level computed")[i];
            dst[i] = if f > 0.0 {
                let hi = levels[(l0 + 1).min(top)].as_ref().expect("level computed")[i];
                (1.0 - f) * lo + f * hi
            } else {
                lo
            };
        }
    }
    add_noise_and_clamp(&mut out, cfg.noise_sigma, cfg.seed);
    Ok(Image::new(w, h, out.into_iter().map(|v| v as f32).collect()))
}

/// Synthetic ground-truth defocus map, values in `[0, sigma_max]`.
pub fn generate_defocus_map(width: usize, height: usize, cfg: &BlurConfig) -> DefocusMap {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let smax = cfg.sigma_max;
    let data: Vec<f64> = match cfg.map_model {
        MapModel::GaussianField => {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let noise: Vec<f64> = (0..width * height).map(|_| normal.sample(&mut rng)).collect();
            let smooth_sigma = width.max(height) as f64 / 6.0;
            let field = blur_plane(&noise, width, height, &gaussian_taps(smooth_sigma));
            let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-12 {
                field.iter().map(|v| (v - lo) / (hi - lo) * smax).collect()
            } else {
                vec![0.5 * smax; width * height]
            }
        }
        MapModel::TiltedPlane => {
            // The in-focus line passes through a random pixel centre.
            let norm = |v: usize, n: usize| if n > 1 { v as f64 / (n - 1) as f64 } else { 0.0 };
            let px = norm(rng.gen_range(0..width), width);
            let py = norm(rng.gen_range(0..height), height);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let slope = rng.gen_range(0.8..2.0);
            let (a, b) = (slope * theta.cos(), slope * theta.sin());
            let c = -(a * px + b * py);
            (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .map(|(x, y)| (smax * (a * norm(x, width) + b * norm(y, height) + c).abs()).clamp(0.0, smax))
                .collect()
        }
    };
    DefocusMap::new(width, height, data.into_iter().map(|v| (v as f32).clamp(0.0, smax as f32)).collect())
}

/// Procedural sharp scene: gradient background overlaid with solid shapes
/// and high-frequency stripe/checker patches.
pub fn generate_sharp_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let color = |rng: &mut ChaCha8Rng| -> [f32; 3] { [rng.gen(), rng.gen(), rng.gen()] };
    let (wf, hf) = (width as f32, height as f32);
    let mut img = Image::filled(width, height, 0.0);

    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    for y in 0..height {
        for x in 0..width {
            let t = (((x as f32 / wf - 0.5) * dx + (y as f32 / hf - 0.5) * dy) + 0.75).clamp(0.0, 1.5) / 1.5;
            for c in 0..CHANNELS {
                img.set(c, y, x, c0[c] * (1.0 - t) + c1[c] * t);
            }
        }
    }

    let shapes = rng.gen_range(6..=12);
    for _ in 0..shapes {
        let kind = rng.gen_range(0..4);
        let ca = color(&mut rng);
        let cb = color(&mut rng);
        let cx = rng.gen_range(0.0..wf);
        let cy = rng.gen_range(0.0..hf);
        let rx = rng.gen_range(0.08..0.35) * wf;
        let ry = rng.gen_range(0.08..0.35) * hf;
        let period = rng.gen_range(2.0f32..8.0);
        let theta: f32 = rng.gen_range(0.0..std::f32::consts::PI);
        let (sx, sy) = (theta.cos(), theta.sin());
        for y in 0..height {
            for x in 0..width {
                let (fx, fy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                let v = match kind {
                    // solid rectangle
                    0 if fx.abs() <= rx && fy.abs() <= ry => Some(ca),
                    // solid disc
                    1 if (fx / rx).powi(2) + (fy / rx).powi(2) <= 1.0 => Some(ca),
                    // oriented stripes in a rectangle
                    2 if fx.abs() <= rx && fy.abs() <= ry => {
                        let phase = ((fx * sx + fy * sy) / period).rem_euclid(1.0);
                        Some(if phase < 0.5 { ca } else { cb })
                    }
                    // checkerboard in a disc
                    3 if (fx / rx).powi(2) + (fy / ry).powi(2) <= 1.0 => {
                        let cell = ((fx / period).floor() as i64 + (fy / period).floor() as i64).rem_euclid(2);
                        Some(if cell == 0 { ca } else { cb })
                    }
                    _ => None,
                };
                if let Some(v) = v {
                    for (c, &value) in v.iter().enumerate().take(CHANNELS) {
                        img.set(c, y, x, value);
                    }
                }
            }
        }
    }
    img.clamp01();
    img
}
