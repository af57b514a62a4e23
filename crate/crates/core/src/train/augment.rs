use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::dataset::Triplet;
use crate::image::{DefocusMap, Image, CHANNELS};

/// One random geometric transform: crop window, then flips, then rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDraw {
    pub crop: usize,
    pub y0: usize,
    pub x0: usize,
    pub flip_h: bool,
    pub flip_v: bool,
    /// Counter-clockwise quarter turns, `0..4`.
    pub quarter_turns: u8,
}

impl AugmentDraw {
    pub fn identity(size: usize) -> Self {
        Self { crop: size, y0: 0, x0: 0, flip_h: false, flip_v: false, quarter_turns: 0 }
    }

    pub fn sample(
        height: usize,
        width: usize,
        crop: usize,
        flips: bool,
        rotations: bool,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if crop == 0 || crop > height || crop > width {
            return Err(TrainError::CropTooLarge { crop, height, width });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y0 = rng.gen_range(0..=height - crop);
        let x0 = rng.gen_range(0..=width - crop);
        let (flip_h, flip_v) = if flips { (rng.gen(), rng.gen()) } else { (false, false) };
        let quarter_turns = if rotations { rng.gen_range(0..4) } else { 0 };
        Ok(Self { crop, y0, x0, flip_h, flip_v, quarter_turns })
    }

    /// Transforms one `height x width` plane into a `crop x crop` plane.
    pub fn apply_plane(&self, plane: &[f32], width: usize) -> Vec<f32> {
        let s = self.crop;
        let mut out = vec![0.0; s * s];
        for y in 0..s {
            for x in 0..s {
                // undo the rotation, then the flips, to find the source pixel
                let (mut sy, mut sx) = (y, x);
                for _ in 0..self.quarter_turns {
                    (sy, sx) = (sx, s - 1 - sy);
                }
                if self.flip_v {
                    sy = s - 1 - sy;
                }
                if self.flip_h {
                    sx = s - 1 - sx;
                }
                out[y * s + x] = plane[(self.y0 + sy) * width + self.x0 + sx];
            }
        }
        out
    }

    pub fn apply_image(&self, img: &Image) -> Image {
        let data = (0..CHANNELS).flat_map(|c| self.apply_plane(img.plane(c), img.width)).collect();
        Image::new(self.crop, self.crop, data)
    }

    pub fn apply_map(&self, map: &DefocusMap) -> DefocusMap {
        DefocusMap::new(self.crop, self.crop, self.apply_plane(&map.data, map.width))
    }

    pub fn apply(&self, t: &Triplet) -> Triplet {
        Triplet {
            id: t.id.clone(),
            sharp: self.apply_image(&t.sharp),
            blurry: self.apply_image(&t.blurry),
            map: self.apply_map(&t.map),
        }
    }
}

/// Seeded crop, flip and rotation applied identically to all three members.
pub fn augment(t: &Triplet, crop: usize, flips: bool, rotations: bool, seed: u64) -> Result<Triplet, TrainError> {
    let draw = AugmentDraw::sample(t.sharp.height, t.sharp.width, crop, flips, rotations, seed)?;
    Ok(draw.apply(t))
}
