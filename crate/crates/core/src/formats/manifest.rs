use std::path::PathBuf;

use super::FormatError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sharp: PathBuf,
    pub blurry: PathBuf,
    pub map: PathBuf,
}

/// Header `# key = value` lines describing how the data was generated, then
/// one `sharp <path> blurry <path> map <path>` line per triplet. Paths are
/// relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub header: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn format_manifest(m: &Manifest) -> String {
    let mut out = String::from("# defocus deblurring dataset\n");
    for (k, v) in &m.header {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    for e in &m.entries {
        out.push_str(&format!("sharp {} blurry {} map {}\n", e.sharp.display(), e.blurry.display(), e.map.display()));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Manifest, FormatError> {
    let what = "manifest";
    let mut m = Manifest::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                m.header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[..] {
            ["sharp", s, "blurry", b, "map", d] => {
                m.entries.push(ManifestEntry { sharp: s.into(), blurry: b.into(), map: d.into() })
            }
            _ => {
                return Err(FormatError::malformed(
                    what,
                    format!("line {}: expected `sharp <path> blurry <path> map <path>`", i + 1),
                ))
            }
        }
    }
    if m.entries.is_empty() {
        return Err(FormatError::malformed(what, "no triplets listed"));
    }
    Ok(m)
}
