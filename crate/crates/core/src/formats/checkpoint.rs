use std::collections::BTreeMap;
use std::path::Path;

use super::{read_file, write_file, FormatError, Reader};
use crate::nets::{ArchConfig, ModelParams, Variant};
use crate::tensor::Tensor;

const MAGIC: &[u8] = b"CKPT";
const VERSION: u32 = 1;
const META_VARIANT: &str = "meta.variant";
const META_ARCH: &str = "meta.arch";

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    push_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    push_u32(out, shape.len());
    for &d in shape {
        push_u32(out, d);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Meta tensors first, then parameters in name order, then a CRC32 of everything before it.
pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    push_u32(&mut out, VERSION as usize);
    push_u32(&mut out, params.tensors.len() + 2);
    push_tensor(&mut out, META_VARIANT, &[1], &[params.variant.id() as f32]);
    let arch: Vec<f32> = params.arch.as_array().iter().map(|&v| v as f32).collect();
    push_tensor(&mut out, META_ARCH, &[5], &arch);
    for (name, t) in &params.tensors {
        push_tensor(&mut out, name, t.shape(), t.data());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn meta_integer(what: &'static str, v: f32) -> Result<usize, FormatError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e7 {
        Ok(v as usize)
    } else {
        Err(FormatError::malformed(what, format!("meta value {v} is not a small integer")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>, FormatError> {
    let what = "checkpoint";
    if !bytes.starts_with(MAGIC) {
        return Err(FormatError::BadMagic { what });
    }
    if bytes.len() < MAGIC.len() + 12 {
        return Err(FormatError::malformed(what, "file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Crc { stored, computed });
    }
    let mut r = Reader::new(what, &body[MAGIC.len()..]);
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::malformed(what, format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::malformed(what, "tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| FormatError::malformed(what, format!("tensor `{name}` is too large")))?;
        let data = r.f32s(n)?;
        let t = Tensor::new(shape, data).map_err(|e| FormatError::malformed(what, format!("tensor `{name}`: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(FormatError::malformed(what, format!("duplicate tensor `{name}`")));
        }
    }
    if r.remaining() != 0 {
        return Err(FormatError::malformed(what, format!("{} trailing bytes before CRC", r.remaining())));
    }

    let variant_t = tensors.remove(META_VARIANT).ok_or_else(|| FormatError::malformed(what, "missing meta.variant"))?;
    let arch_t = tensors.remove(META_ARCH).ok_or_else(|| FormatError::malformed(what, "missing meta.arch"))?;
    if variant_t.len() != 1 || arch_t.len() != 5 {
        return Err(FormatError::malformed(what, "meta tensors have the wrong size"));
    }
    let id = meta_integer(what, variant_t.data()[0])?;
    let variant = Variant::from_id(id as u32).ok_or_else(|| FormatError::malformed(what, format!("unknown variant id {id}")))?;
    let mut arch = [0usize; 5];
    for (a, &v) in arch.iter_mut().zip(arch_t.data()) {
        *a = meta_integer(what, v)?;
    }
    let params = ModelParams { arch: ArchConfig::from_array(arch), variant, tensors };
    params.validate().map_err(|e| FormatError::malformed(what, e.to_string()))?;
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &ModelParams<f32>) -> Result<(), FormatError> {
    write_file(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams<f32>, FormatError> {
    decode_checkpoint(&read_file(path)?)
}
