//! Run directories and manifests.
//!
//! Each run writes into `<out>/<subcommand>-<timestamp>/`. Files are
//! registered as they are written and the manifest, with a SHA-256 digest
//! of every output, is written last through a temporary file and a rename.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    subcommand: String,
    config: String,
    started: DateTime<Utc>,
    files: Vec<(String, String, usize)>,
    notes: Vec<(String, String)>,
}

impl RunDir {
    /// Creates a fresh directory; a numeric suffix avoids collisions
    /// between runs started within the same millisecond.
    pub fn create(out: &Path, subcommand: &str, config: &str) -> Result<Self> {
        let started = Utc::now();
        let stamp = started.format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let base = out.join(format!("{subcommand}-{stamp}"));
        let mut path = base.clone();
        let mut k = 1;
        while path.exists() {
            path = PathBuf::from(format!("{}-{k}", base.display()));
            k += 1;
        }
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut dir = Self {
            path,
            subcommand: subcommand.to_string(),
            config: config.to_string(),
            started,
            files: Vec::new(),
            notes: Vec::new(),
        };
        if !config.is_empty() {
            dir.write("config.txt", config.as_bytes())?;
        }
        Ok(dir)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.path.join(name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, bytes).with_context(|| format!("writing {}", target.display()))?;
        self.files.push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(target)
    }

    /// Extra `key: value` line in the manifest.
    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn render_manifest(&self, finished: DateTime<Utc>) -> String {
        let mut out = String::new();
        out.push_str(&format!("subcommand: {}\n", self.subcommand));
        out.push_str(&format!("version: vheat {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!(
            "started: {}\n",
            self.started.to_rfc3339_opts(SecondsFormat::Millis, true)
        ));
        out.push_str(&format!(
            "finished: {}\n",
            finished.to_rfc3339_opts(SecondsFormat::Millis, true)
        ));
        out.push_str(&format!("config_sha256: {}\n", sha256_hex(self.config.as_bytes())));
        for (k, v) in &self.notes {
            out.push_str(&format!("{k}: {v}\n"));
        }
        out.push_str("[config]\n");
        out.push_str(&self.config);
        if !self.config.ends_with('\n') && !self.config.is_empty() {
            out.push('\n');
        }
        out.push_str("[files]\n");
        for (name, digest, size) in &self.files {
            out.push_str(&format!("{digest}  {size:>10}  {name}\n"));
        }
        out
    }

    /// Writes `manifest.txt` atomically and returns the directory.
    pub fn finish(self) -> Result<PathBuf> {
        let text = self.render_manifest(Utc::now());
        let tmp = self.path.join("manifest.txt.tmp");
        fs::write(&tmp, &text)?;
        fs::rename(&tmp, self.path.join("manifest.txt"))?;
        Ok(self.path)
    }
}

/// Checks every digest listed in a manifest against the files on disk.
#[cfg(test)]
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut bad = Vec::new();
    let files = text.split("[files]\n").nth(1).unwrap_or("");
    for line in files.lines() {
        let mut parts = line.split_whitespace();
        let (Some(digest), Some(_), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let bytes = fs::read(dir.join(name))?;
        if sha256_hex(&bytes) != digest {
            bad.push(name.to_string());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_digests_are_recomputable() {
        let out = std::env::temp_dir().join(format!("vheat-manifest-{}", std::process::id()));
        let mut dir = RunDir::create(&out, "test", "a = 1\n").unwrap();
        dir.write("x.csv", b"t\n1\n").unwrap();
        dir.note("seeds", "1,2");
        let path = dir.finish().unwrap();
        let text = fs::read_to_string(path.join("manifest.txt")).unwrap();
        assert!(text.contains("seeds: 1,2") && text.contains("x.csv") && text.contains("config.txt"));
        assert!(verify_manifest(&path).unwrap().is_empty());
        fs::write(path.join("x.csv"), b"changed").unwrap();
        assert_eq!(verify_manifest(&path).unwrap(), vec!["x.csv".to_string()]);
        fs::remove_dir_all(&out).unwrap();
    }
}
