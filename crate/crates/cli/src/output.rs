//! Artifact collection and the hashed manifest.

use std::path::{Path, PathBuf};

use anyhow::Context;
use sha2::{Digest, Sha256};

/// Files produced by a run, kept in memory until the run succeeds.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn extend(&mut self, other: Artifacts) {
        self.files.extend(other.files);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file under `dir`, then `manifest.csv` listing them with
    /// their SHA-256.
    pub fn write(&self, dir: &Path) -> anyhow::Result<Manifest> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            entries.push(ManifestEntry {
                path: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = Manifest { entries };
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, manifest.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,bytes,sha256\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.path, e.bytes, e.sha256));
        }
        out
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let entries = text
            .lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| {
                let mut f = l.splitn(3, ',');
                let (p, b, h) = (f.next(), f.next(), f.next());
                match (p, b.and_then(|b| b.parse().ok()), h) {
                    (Some(p), Some(b), Some(h)) => Ok(ManifestEntry {
                        path: p.to_string(),
                        bytes: b,
                        sha256: h.to_string(),
                    }),
                    _ => anyhow::bail!("malformed manifest line `{l}` in {}", path.display()),
                }
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(Self { entries })
    }

    /// Entries whose path ends in `.csv`.
    pub fn csv_entries(&self) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.path.ends_with(".csv")).collect()
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.entries.iter().map(|e| PathBuf::from(&e.path)).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Shortest round-tripping decimal form, for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
