//! On-disk formats: defocus maps (DMF), checkpoints, run configs, dataset
//! manifests, evaluation reports and training logs.

mod checkpoint;
mod config;
mod dmf;
mod log;
mod manifest;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use config::{parse_config, serialize_config, RunConfig};
pub use dmf::{decode_dmf, encode_dmf, read_dmf, write_dmf};
pub use log::{format_log, format_record, parse_log};
pub use manifest::{format_manifest, parse_manifest, Manifest, ManifestEntry};
pub use report::{format_report, parse_report};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{what}: bad magic bytes")]
    BadMagic { what: &'static str },
    #[error("{what}: {msg}")]
    Malformed { what: &'static str, msg: String },
    #[error("checkpoint corrupted: stored CRC32 {stored:08x}, computed {computed:08x}")]
    Crc { stored: u32, computed: u32 },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

impl FormatError {
    pub(crate) fn malformed(what: &'static str, msg: impl Into<String>) -> Self {
        FormatError::Malformed { what, msg: msg.into() }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    what: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(what: &'static str, bytes: &'a [u8]) -> Self {
        Self { what, bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FormatError::malformed(self.what, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let len = n.checked_mul(4).ok_or_else(|| FormatError::malformed(self.what, "payload size overflows"))?;
        let raw = self.take(len)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
