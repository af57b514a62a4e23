//! Planar float images, defocus maps and their tensor/PNG conversions.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Real, Tensor};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: cannot decode PNG: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: cannot encode PNG: {message}")]
    Encode { path: String, message: String },
    #[error("size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("tensor of shape {0:?} is not a single {1}-channel image")]
    TensorShape(Vec<usize>, usize),
}

/// RGB image, values in `[0, 1]`, stored planar (`3 x H x W`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), CHANNELS * width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; CHANNELS * width * height])
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for c in 0..CHANNELS {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, y, self.width - 1 - x, self.get(c, y, x));
                }
            }
        }
        out
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// `1 x 3 x H x W` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(vec![1, CHANNELS, self.height, self.width], self.data.iter().map(|&v| T::lit(v as f64)).collect())
            .expect("image dims are consistent")
    }

    /// Inverse of [`Image::to_tensor`]; accepts `1 x 3 x H x W`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self, ImageError> {
        match t.shape() {
            &[1, CHANNELS, h, w] => Ok(Self::new(w, h, t.data().iter().map(|v| v.as_f64() as f32).collect())),
            s => Err(ImageError::TensorShape(s.to_vec(), CHANNELS)),
        }
    }

    /// Rounds to 8 bits per channel, as stored on disk.
    pub fn quantized(&self) -> Self {
        Self::new(self.width, self.height, self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let p = path.display().to_string();
        let file = File::create(path).map_err(|source| ImageError::Io { path: p.clone(), source })?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| ImageError::Encode { path: p.clone(), message: e.to_string() })?;
        let n = self.width * self.height;
        let mut bytes = Vec::with_capacity(n * CHANNELS);
        for i in 0..n {
            for c in 0..CHANNELS {
                bytes.push(to_u8(self.data[c * n + i]));
            }
        }
        writer.write_image_data(&bytes).map_err(|e| ImageError::Encode { path: p, message: e.to_string() })
    }

    /// Loads an 8-bit PNG; grayscale is replicated to three channels and alpha dropped.
    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let p = path.display().to_string();
        let file = File::open(path).map_err(|source| ImageError::Io { path: p.clone(), source })?;
        let mut dec = png::Decoder::new(BufReader::new(file));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| ImageError::Decode { path: p.clone(), message: e.to_string() })?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| ImageError::Decode { path: p.clone(), message: e.to_string() })?;
        let (w, h) = (info.width as usize, info.height as usize);
        let stride = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(ImageError::Decode { path: p, message: format!("unsupported color type {other:?}") }),
        };
        let n = w * h;
        let mut data = vec![0.0f32; CHANNELS * n];
        for i in 0..n {
            let px = &buf[i * stride..];
            for c in 0..CHANNELS {
                let v = if stride < 3 { px[0] } else { px[c] };
                data[c * n + i] = v as f32 / 255.0;
            }
        }
        Ok(Self::new(w, h, data))
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Per-pixel blur magnitude as a Gaussian sigma in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DefocusMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DefocusMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn constant(width: usize, height: usize, sigma: f32) -> Self {
        Self::new(width, height, vec![sigma; width * height])
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width) {
            row.reverse();
        }
        Self::new(self.width, self.height, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// `1 x 1 x H x W` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(vec![1, 1, self.height, self.width], self.data.iter().map(|&v| T::lit(v as f64)).collect())
            .expect("map dims are consistent")
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self, ImageError> {
        match t.shape() {
            &[1, 1, h, w] => Ok(Self::new(w, h, t.data().iter().map(|v| v.as_f64() as f32).collect())),
            s => Err(ImageError::TensorShape(s.to_vec(), 1)),
        }
    }
}
