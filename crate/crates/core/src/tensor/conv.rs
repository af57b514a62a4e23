//! Stride-1, same-padding 2-D convolution via im2col + GEMM.

use super::scalar::Real;
use super::{Tensor, TensorError};
use crate::par;

/// Validated geometry of one convolution call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeometry {
    pub fn new<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Self, TensorError> {
        let (n, cin, h, w) = input.dims4()?;
        let (cout, wcin, kh, kw) = weight.dims4()?;
        if wcin != cin {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: input.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::EvenKernel(weight.shape().to_vec()));
        }
        if bias.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(Self { n, cin, cout, h, w, kh, kw })
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one `cin x h x w` image into a `(cin*kh*kw) x (h*w)` column matrix.
fn im2col<T: Real>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let hw = h * w;
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &image[ci * hw..(ci + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pw as isize;
                // valid x range: 0 <= x + dx < w
                let x0 = (-dx).max(0) as usize;
                let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + ky as isize - ph as isize;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x0].fill(T::zero());
                    out[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    out[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a column matrix back onto an image, accumulating.
fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let hw = h * w;
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut image[ci * hw..(ci + 1) * hw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pw as isize;
                let x0 = (-dx).max(0) as usize;
                let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let s0 = (x0 as isize + dx) as usize;
                    for (d, &s) in dst[s0..s0 + (x1 - x0)].iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let g = ConvGeometry::new(input, weight, bias)?;
    let (hw, k) = (g.plane(), g.patch_len());
    let in_len = g.cin * hw;
    let out_len = g.cout * hw;
    let mut out = vec![T::zero(); g.n * out_len];
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    par::map_chunks_mut(&mut out, out_len, |n, dst| {
        let image = &x[n * in_len..(n + 1) * in_len];
        for (co, plane) in dst.chunks_mut(hw).enumerate() {
            plane.fill(b[co]);
        }
        if g.pointwise() {
            T::gemm(g.cout, k, hw, T::one(), wt, (k as isize, 1), image, (hw as isize, 1), T::one(), dst, (hw as isize, 1));
        } else {
            T::with_scratch(k * hw, |cols| {
                im2col(&g, image, cols);
                T::gemm(g.cout, k, hw, T::one(), wt, (k as isize, 1), cols, (hw as isize, 1), T::one(), dst, (hw as isize, 1));
            });
        }
    });
    Tensor::new(vec![g.n, g.cout, g.h, g.w], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>, TensorError> {
    let g = ConvGeometry::new(input, weight, bias)?;
    let (hw, k) = (g.plane(), g.patch_len());
    let in_len = g.cin * hw;
    let out_len = g.cout * hw;
    let x = input.data();
    let wt = weight.data();
    let gy = grad_out.data();

    // Per-image partial weight/bias gradients, reduced in batch order below.
    let per_image = |n: usize, dx: Option<&mut [T]>| -> (Vec<T>, Vec<T>) {
        let image = &x[n * in_len..(n + 1) * in_len];
        let gn = &gy[n * out_len..(n + 1) * out_len];
        let mut dw = vec![T::zero(); g.cout * k];
        let db: Vec<T> = gn.chunks(hw).map(|p| p.iter().copied().sum()).collect();
        if g.pointwise() {
            T::gemm(g.cout, hw, k, T::one(), gn, (hw as isize, 1), image, (1, hw as isize), T::zero(), &mut dw, (k as isize, 1));
            if let Some(dx) = dx {
                T::gemm(k, g.cout, hw, T::one(), wt, (1, k as isize), gn, (hw as isize, 1), T::zero(), dx, (hw as isize, 1));
            }
        } else {
            T::with_scratch(k * hw, |cols| {
                im2col(&g, image, cols);
                T::gemm(g.cout, hw, k, T::one(), gn, (hw as isize, 1), cols, (1, hw as isize), T::zero(), &mut dw, (k as isize, 1));
                if let Some(dx) = dx {
                    // beta = 0: the stale scratch contents are never read
                    T::gemm(k, g.cout, hw, T::one(), wt, (1, k as isize), gn, (hw as isize, 1), T::zero(), cols, (hw as isize, 1));
                    col2im(&g, cols, dx);
                }
            });
        }
        (dw, db)
    };

    let (partials, dx) = if need_input {
        let mut dx = vec![T::zero(); g.n * in_len];
        let partials = par::map_chunks_mut(&mut dx, in_len, |n, chunk| per_image(n, Some(chunk)));
        (partials, Some(Tensor::new(input.shape().to_vec(), dx)?))
    } else {
        (par::map_range(g.n, |n| per_image(n, None)), None)
    };

    let mut dw = vec![T::zero(); g.cout * k];
    let mut db = vec![T::zero(); g.cout];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    Ok(ConvGrads { input: dx, weight: Tensor::new(weight.shape().to_vec(), dw)?, bias: Tensor::new(vec![g.cout], db)? })
}
