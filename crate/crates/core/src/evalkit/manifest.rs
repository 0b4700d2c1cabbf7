//! JSON-lines manifests.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Accepted dataset names.
pub const DATASETS: [&str; 8] = ["IIIT", "SVT", "IC03", "IC13", "IC15", "SP", "CT", "custom"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    /// Image path, relative to the manifest's directory unless absolute.
    pub image: String,
    pub label: String,
    pub dataset: String,
    /// Identifier of the source scene image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    /// Hex SHA-256 of the source scene image bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

impl Entry {
    pub fn new(image: impl Into<String>, label: impl Into<String>, dataset: impl Into<String>) -> Self {
        Entry {
            image: image.into(),
            label: label.into(),
            dataset: dataset.into(),
            scene: None,
            digest: None,
        }
    }

    pub fn with_scene(mut self, scene: impl Into<String>) -> Self {
        self.scene = Some(scene.into());
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.digest = Some(digest.into());
        self
    }
}

/// Entries unique by image reference.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn new(entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !DATASETS.contains(&e.dataset.as_str()) {
                return Err(Error::Data(format!("image {}: unknown dataset '{}'", e.image, e.dataset)));
            }
            if !seen.insert(e.image.as_str()) {
                return Err(Error::Data(format!("duplicate image reference '{}'", e.image)));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_dataset(&self, dataset: &str) -> impl Iterator<Item = &Entry> {
        let d = dataset.to_string();
        self.entries.iter().filter(move |e| e.dataset == d)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(line).map_err(|e| Error::Data(format!("manifest line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain strings") + "\n")
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Hex SHA-256 of raw bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let m = Manifest::new(vec![
            Entry::new("a.png", "Hi", "IC03").with_scene("s1"),
            Entry::new("b.png", "yo", "custom").with_digest(digest_bytes(b"x")),
        ])
        .unwrap();
        let text = m.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"scene\":\"s1\""));
        assert_eq!(Manifest::parse_jsonl(&text).unwrap(), m);
    }

    #[test]
    fn rejects_duplicates_and_unknown_sets() {
        assert!(Manifest::new(vec![Entry::new("a", "x", "IC03"), Entry::new("a", "y", "IC03")]).is_err());
        assert!(Manifest::new(vec![Entry::new("a", "x", "COCO")]).is_err());
        assert!(Manifest::parse_jsonl("{\"image\":1}").is_err());
    }
}
