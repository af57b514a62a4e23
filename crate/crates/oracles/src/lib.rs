//! Slow, direct reference implementations. Everything here works on plain
//! `f64` slices with explicit loops and shares no code with `defocus-core`.

/// Planar `channels x height x width` image in `f64`.
#[derive(Clone, Debug)]
pub struct Planes {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Mirror an out-of-range index back into `0..n`, repeating the edge sample.
pub fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Normalized 2-D Gaussian with radius `ceil(3 sigma)`, a delta below 0.3.
pub fn gaussian_2d(sigma: f64) -> (usize, Vec<f64>) {
    if sigma < 0.3 {
        return (0, vec![1.0]);
    }
    let r = (3.0 * sigma).ceil() as usize;
    let size = 2 * r + 1;
    let mut k = Vec::with_capacity(size * size);
    for dy in -(r as i64)..=r as i64 {
        for dx in -(r as i64)..=r as i64 {
            k.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = k.iter().sum();
    (r, k.into_iter().map(|v| v / total).collect())
}

/// Destination-gather blur: each output pixel uses the kernel of its own sigma.
pub fn gather_blur(img: &Planes, sigma: &[f64]) -> Planes {
    let (h, w) = (img.height, img.width);
    let mut out = vec![0.0; img.data.len()];
    for c in 0..img.channels {
        for y in 0..h {
            for x in 0..w {
                let (r, k) = gaussian_2d(sigma[y * w + x]);
                let size = 2 * r + 1;
                let mut acc = 0.0;
                for i in 0..size {
                    for j in 0..size {
                        let sy = mirror(y as i64 + i as i64 - r as i64, h);
                        let sx = mirror(x as i64 + j as i64 - r as i64, w);
                        acc += k[i * size + j] * img.at(c, sy, sx);
                    }
                }
                out[(c * h + y) * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Planes { data: out, ..img.clone() }
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s / a.len() as f64
}

pub fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

/// Per-sample `m / mean(m)` for `n` maps of `hw` pixels each.
pub fn weight_map(maps: &[f64], n: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * hw];
    for s in 0..n {
        let mut total = 0.0;
        for p in 0..hw {
            total += maps[s * hw + p];
        }
        let mean = total / hw as f64;
        for p in 0..hw {
            out[s * hw + p] = maps[s * hw + p] / mean;
        }
    }
    out
}

/// Mean of `(W (a - b))^2` over `n x 3 x hw` images with a per-pixel weight.
pub fn weighted_sq_loss(a: &[f64], b: &[f64], maps: &[f64], n: usize, hw: usize) -> f64 {
    let w = weight_map(maps, n, hw);
    let mut s = 0.0;
    for sample in 0..n {
        for c in 0..3 {
            for p in 0..hw {
                let i = (sample * 3 + c) * hw + p;
                let d = w[sample * hw + p] * (a[i] - b[i]);
                s += d * d;
            }
        }
    }
    s / (n * 3 * hw) as f64
}

pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    let mse = mean_sq_diff(a, b);
    if mse == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// SSIM of two constant patches (all variances and covariances zero).
pub fn ssim_constants(a: f64, b: f64) -> f64 {
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    ((2.0 * a * b + c1) * c2) / ((a * a + b * b + c1) * c2)
}

/// Per-channel SSIM with an 11x11 Gaussian window (sigma 1.5), evaluated
/// window by window with direct sums over valid positions, then averaged.
pub fn ssim(a: &Planes, b: &Planes) -> f64 {
    let (h, w) = (a.height, a.width);
    let mut win = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let mut sum = 0.0;
    for c in 0..a.channels {
        let mut acc = 0.0;
        let mut count = 0;
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = win[i][j] / total;
                        let (u, v) = (a.at(c, y + i, x + j), b.at(c, y + i, x + j));
                        mx += k * u;
                        my += k * v;
                        sxx += k * u * u;
                        syy += k * v * v;
                        sxy += k * u * v;
                    }
                }
                let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        sum += acc / count as f64;
    }
    sum / a.channels as f64
}

/// Mean absolute response of the 4-neighbour Laplacian over interior pixels of all channels.
pub fn mean_abs_laplacian(img: &Planes) -> f64 {
    let (h, w) = (img.height, img.width);
    let mut s = 0.0;
    let mut n = 0;
    for c in 0..img.channels {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let l = img.at(c, y - 1, x) + img.at(c, y + 1, x) + img.at(c, y, x - 1) + img.at(c, y, x + 1)
                    - 4.0 * img.at(c, y, x);
                s += l.abs();
                n += 1;
            }
        }
    }
    s / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_repeats_edges() {
        assert_eq!(mirror(-1, 4), 0);
        assert_eq!(mirror(-2, 4), 1);
        assert_eq!(mirror(4, 4), 3);
        assert_eq!(mirror(5, 4), 2);
    }

    #[test]
    fn gaussian_is_normalized() {
        let (r, k) = gaussian_2d(1.3);
        assert_eq!(r, 4);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
