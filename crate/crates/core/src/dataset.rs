//! Synthetic (sharp, blurry, defocus map) triplets on disk and in memory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::blur::{apply_spatially_varying_blur, generate_defocus_map, generate_sharp_image, BlurConfig, BlurError};
use crate::formats::{format_manifest, parse_manifest, read_dmf, write_dmf, FormatError, Manifest, ManifestEntry};
use crate::image::{DefocusMap, Image, ImageError};
use crate::par;

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Blur(#[from] BlurError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("triplet `{id}`: {msg}")]
    Inconsistent { id: String, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub id: String,
    pub sharp: Image,
    pub blurry: Image,
    pub map: DefocusMap,
}

impl Triplet {
    fn check(&self) -> Result<(), DataError> {
        let s = (self.sharp.width, self.sharp.height);
        let b = (self.blurry.width, self.blurry.height);
        let m = (self.map.width, self.map.height);
        if s != b || s != m {
            let msg = format!("sizes differ: sharp {s:?}, blurry {b:?}, map {m:?}");
            return Err(DataError::Inconsistent { id: self.id.clone(), msg });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub triplets: Vec<Triplet>,
}

/// Seed of triplet `index`: the base seed xor the index times the 64-bit golden ratio.
pub fn triplet_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Builds triplet `index` of the dataset described by `cfg`. Images are
/// quantized to 8 bits so the result equals what a PNG round trip yields.
pub fn synthesize_triplet(index: usize, width: usize, height: usize, cfg: &BlurConfig) -> Result<Triplet, BlurError> {
    let local = BlurConfig { seed: triplet_seed(cfg.seed, index), ..cfg.clone() };
    let map = generate_defocus_map(width, height, &local);
    let sharp = generate_sharp_image(width, height, local.seed ^ 0x5348_4152_5000).quantized();
    let blurry = apply_spatially_varying_blur(&sharp, &map, &local)?.quantized();
    Ok(Triplet { id: format!("{index:04}"), sharp, blurry, map })
}

pub fn synthesize(count: usize, width: usize, height: usize, cfg: &BlurConfig) -> Result<Vec<Triplet>, BlurError> {
    cfg.validate()?;
    par::try_map_range(count, |i| synthesize_triplet(i, width, height, cfg))
}

fn entry_names(id: &str) -> ManifestEntry {
    ManifestEntry {
        sharp: format!("sharp_{id}.png").into(),
        blurry: format!("blurry_{id}.png").into(),
        map: format!("map_{id}.dmf").into(),
    }
}

/// Writes `count` triplets plus a manifest into `out_dir`; returns the manifest path.
pub fn synth_dataset(
    count: usize,
    width: usize,
    height: usize,
    cfg: &BlurConfig,
    out_dir: &Path,
) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(out_dir).map_err(|source| DataError::Io { path: out_dir.to_path_buf(), source })?;
    let triplets = synthesize(count, width, height, cfg)?;
    let entries = par::try_map_range(triplets.len(), |i| -> Result<ManifestEntry, DataError> {
        let t = &triplets[i];
        let e = entry_names(&t.id);
        t.sharp.save_png(&out_dir.join(&e.sharp))?;
        t.blurry.save_png(&out_dir.join(&e.blurry))?;
        write_dmf(&out_dir.join(&e.map), &t.map)?;
        Ok(e)
    })?;
    let header = [
        ("count", count.to_string()),
        ("width", width.to_string()),
        ("height", height.to_string()),
        ("sigma_max", cfg.sigma_max.to_string()),
        ("noise_sigma", cfg.noise_sigma.to_string()),
        ("quantization_levels", cfg.quantization_levels.to_string()),
        ("map_model", cfg.map_model.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    let manifest = Manifest { header: header.into_iter().map(|(k, v)| (k.to_string(), v)).collect(), entries };
    let path = out_dir.join(MANIFEST_NAME);
    std::fs::write(&path, format_manifest(&manifest)).map_err(|source| DataError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Accepts a manifest file or a directory containing `manifest.txt`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|source| DataError::Io { path: mpath.clone(), source })?;
    let manifest = parse_manifest(&text).map_err(|e| match e {
        FormatError::Malformed { what, msg } => FormatError::malformed(what, format!("{}: {msg}", mpath.display())),
        other => other,
    })?;
    let dir = mpath.parent().map(Path::to_path_buf).unwrap_or_default();
    let triplets = par::try_map_range(manifest.entries.len(), |i| -> Result<Triplet, DataError> {
        let e = &manifest.entries[i];
        let id = e.sharp.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let id = id.strip_prefix("sharp_").unwrap_or(id).to_string();
        let t = Triplet {
            id,
            sharp: Image::load_png(&dir.join(&e.sharp))?,
            blurry: Image::load_png(&dir.join(&e.blurry))?,
            map: read_dmf(&dir.join(&e.map))?,
        };
        t.check()?;
        Ok(t)
    })?;
    Ok(Dataset { manifest, triplets })
}

/// Number of triplets held out for evaluation when no separate set is given.
pub fn default_holdout(count: usize) -> usize {
    (count / 9).max(1).min(count.saturating_sub(1))
}

/// Splits off the last `held` triplets.
pub fn split_holdout(mut triplets: Vec<Triplet>, held: usize) -> (Vec<Triplet>, Vec<Triplet>) {
    let cut = triplets.len().saturating_sub(held);
    let tail = triplets.split_off(cut);
    (triplets, tail)
}
