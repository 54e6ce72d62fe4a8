use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::DegradationLabel;
use crate::{Error, Result};

/// One synthesized sample. `path` is relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: DegradationLabel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub crop_size: usize,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for entry in &self.entries {
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample id {:?}", entry.id)));
            }
            entry
                .label
                .validate()
                .map_err(|e| Error::Manifest(format!("entry {:?}: {e}", entry.id)))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Resolves an entry path against the directory holding the manifest.
    pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&entry.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::DegradationKind;

    fn entry(id: &str, label: DegradationLabel) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            path: format!("{id}.png"),
            label,
            seed: 1,
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let label = DegradationLabel::new(DegradationKind::GaussianNoise, 0, None).unwrap();
        let m = CorpusManifest {
            crop_size: 256,
            entries: vec![entry("a", label), entry("a", label)],
        };
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    }

    #[test]
    fn label_json_shape() {
        let m = CorpusManifest {
            crop_size: 256,
            entries: vec![entry(
                "x",
                DegradationLabel::new(DegradationKind::Chain, 2, Some(3)).unwrap(),
            )],
        };
        let json = m.to_json().unwrap();
        assert!(json.contains("\"type\": \"chain\""));
        assert!(json.contains("\"order\": 3"));
        assert_eq!(CorpusManifest::from_json(&json).unwrap(), m);
    }

    #[test]
    fn rejects_invalid_label() {
        let text = r#"{"crop_size":256,"entries":[{"id":"a","path":"a.png","seed":0,
            "label":{"type":"haze","level":1,"order":4}}]}"#;
        assert!(matches!(CorpusManifest::from_json(text), Err(Error::Manifest(_))));
        assert!(CorpusManifest::from_json("{not json").is_err());
    }

    #[test]
    fn resolves_relative_to_manifest() {
        let e = entry("s", DegradationLabel::new(DegradationKind::Haze, 0, None).unwrap());
        let p = CorpusManifest::resolve(Path::new("/data/out/manifest.json"), &e);
        assert_eq!(p, Path::new("/data/out/s.png"));
    }
}
