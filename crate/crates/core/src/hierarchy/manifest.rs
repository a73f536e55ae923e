use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::LawSource;

/// Ensemble manifest: `{"laws": [{"name": "G", "file": "G.law"}, {"name": "B", "file": "B.law", "parent": "G"}]}`.
/// File paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub laws: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: path.into(), source })
    }

    /// Reads every law file named by the manifest.
    pub fn sources(&self, base: &Path) -> Result<Vec<LawSource>, ManifestError> {
        self.laws
            .iter()
            .map(|e| {
                let path = base.join(&e.file);
                let text = fs::read_to_string(&path).map_err(|source| ManifestError::Io { path, source })?;
                Ok(LawSource { name: e.name.clone(), parent: e.parent.clone(), text })
            })
            .collect()
    }
}

/// Loads every law a manifest lists. A directory stands for the
/// `ensemble.json` inside it.
pub fn load_sources(manifest_path: &Path) -> Result<Vec<LawSource>, ManifestError> {
    let joined;
    let manifest_path = if manifest_path.is_dir() {
        joined = manifest_path.join("ensemble.json");
        joined.as_path()
    } else {
        manifest_path
    };
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.sources(base)
}

/// Writes `sources` as `.law` files plus a manifest into `dir`, returning
/// the manifest path.
pub fn write_ensemble(dir: &Path, sources: &[LawSource]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut laws = Vec::new();
    for s in sources {
        let file = PathBuf::from(format!("{}.law", s.name));
        fs::write(dir.join(&file), &s.text)?;
        laws.push(ManifestEntry { name: s.name.clone(), file, parent: s.parent.clone() });
    }
    let path = dir.join("ensemble.json");
    fs::write(&path, serde_json::to_string_pretty(&Manifest { laws }).expect("manifest serializes") + "\n")?;
    Ok(path)
}
