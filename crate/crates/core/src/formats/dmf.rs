use std::path::Path;

use super::{read_file, write_file, FormatError, Reader};
use crate::image::DefocusMap;

const MAGIC: &[u8] = b"DMF1\n";

/// `DMF1\n`, `"<width> <height>\n"`, then little-endian `f32` values row by row.
pub fn encode_dmf(map: &DefocusMap) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(format!("{} {}\n", map.width, map.height).as_bytes());
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dmf(bytes: &[u8]) -> Result<DefocusMap, FormatError> {
    let what = "DMF";
    if !bytes.starts_with(MAGIC) {
        return Err(FormatError::BadMagic { what });
    }
    let rest = &bytes[MAGIC.len()..];
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| FormatError::malformed(what, "missing size line"))?;
    let line = std::str::from_utf8(&rest[..nl]).map_err(|_| FormatError::malformed(what, "size line is not ASCII"))?;
    let dims: Vec<usize> = line
        .split(' ')
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| FormatError::malformed(what, format!("bad size line `{line}`")))?;
    let [width, height] = dims[..] else {
        return Err(FormatError::malformed(what, format!("bad size line `{line}`")));
    };
    if width == 0 || height == 0 {
        return Err(FormatError::malformed(what, "zero-sized map"));
    }
    let mut r = Reader::new(what, &rest[nl + 1..]);
    let expected = width.checked_mul(height).ok_or_else(|| FormatError::malformed(what, "size overflows"))?;
    if r.remaining() != expected.saturating_mul(4) {
        return Err(FormatError::malformed(
            what,
            format!("payload is {} bytes, expected {} for {width}x{height}", r.remaining(), 4 * expected),
        ));
    }
    let data = r.f32s(expected)?;
    if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(FormatError::malformed(what, format!("value {} at index {i} is not a finite sigma >= 0", data[i])));
    }
    Ok(DefocusMap::new(width, height, data))
}

pub fn write_dmf(path: &Path, map: &DefocusMap) -> Result<(), FormatError> {
    write_file(path, &encode_dmf(map))
}

pub fn read_dmf(path: &Path) -> Result<DefocusMap, FormatError> {
    decode_dmf(&read_file(path)?).map_err(|e| match e {
        FormatError::Malformed { what, msg } => FormatError::malformed(what, format!("{}: {msg}", path.display())),
        other => other,
    })
}
