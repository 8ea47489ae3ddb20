use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AttackCase;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// One case and the `.eml` files written for it, relative to the corpus
/// directory. A re-send step with no header block of its own gets no file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub files: Vec<String>,
    #[serde(flatten)]
    pub case: AttackCase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn cases(&self) -> Vec<AttackCase> {
        self.entries.iter().map(|e| e.case.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported manifest version {version}")]
    Version { path: PathBuf, version: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_owned(), source }
}

/// Write each case as `.eml` files plus a manifest describing all of them.
pub fn export_corpus(cases: &[AttackCase], dir: &Path) -> Result<Manifest, ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(cases.len());
    for case in cases {
        let mut files = Vec::new();
        let many = case.messages.len() > 1;
        for (i, m) in case.messages.iter().enumerate() {
            if m.header_block.is_empty() {
                continue;
            }
            let name = if many {
                format!("{}_step{}.eml", case.slug(), i + 1)
            } else {
                format!("{}.eml", case.slug())
            };
            let path = dir.join(&name);
            fs::write(&path, m.to_eml()).map_err(io_err(&path))?;
            files.push(name);
        }
        entries.push(ManifestEntry { files, case: case.clone() });
    }
    let manifest = Manifest { schema_version: MANIFEST_VERSION, entries };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_vec_pretty(&manifest).map_err(|source| ExportError::Json { path: path.clone(), source })?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Load a manifest from a corpus directory or from the manifest file itself.
pub fn read_manifest(path: &Path) -> Result<Manifest, ExportError> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_owned() };
    let text = fs::read(&file).map_err(io_err(&file))?;
    let m: Manifest = serde_json::from_slice(&text).map_err(|source| ExportError::Json { path: file.clone(), source })?;
    if m.schema_version != MANIFEST_VERSION {
        return Err(ExportError::Version { path: file, version: m.schema_version });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{combine, generate_all, CASE2};

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("corpus-export-{}", std::process::id()));
        let mut cases = generate_all(3);
        cases.push(
            combine(&CASE2, &crate::corpus::case_bindings(&CASE2).unwrap(), &Default::default()).unwrap(),
        );
        let m = export_corpus(&cases, &dir).unwrap();
        assert_eq!(read_manifest(&dir).unwrap(), m);
        assert_eq!(m.cases(), cases);
        let last = m.entries.last().unwrap();
        assert_eq!(last.files, ["A2-A3-A10_v0_step1.eml"]);
        let eml = fs::read(dir.join(&m.entries[0].files[0])).unwrap();
        assert_eq!(eml, cases[0].messages[0].to_eml());
        fs::remove_dir_all(&dir).unwrap();
    }
}
