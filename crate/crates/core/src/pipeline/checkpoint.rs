use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceOffset {
    pub path: PathBuf,
    /// Bytes of the list whose records are already in the manifest.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub manifest: PathBuf,
    pub config_digest: String,
    pub sources: Vec<SourceOffset>,
}

impl RunCheckpoint {
    pub fn new(manifest: PathBuf, config_digest: String) -> Self {
        Self {
            manifest,
            config_digest,
            sources: Vec::new(),
        }
    }

    pub fn offset(&self, source: &Path) -> u64 {
        self.sources
            .iter()
            .find(|s| s.path == source)
            .map_or(0, |s| s.offset)
    }

    pub fn set_offset(&mut self, source: &Path, offset: u64) {
        match self.sources.iter_mut().find(|s| s.path == source) {
            Some(s) => s.offset = offset,
            None => self.sources.push(SourceOffset {
                path: source.to_path_buf(),
                offset,
            }),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load_if_exists(path: &Path) -> Result<Option<Self>, PipelineError> {
        if path.exists() {
            Self::load(path).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let io_err = |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(&tmp, text).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }
}

/// `<manifest>.checkpoint.json` next to the manifest.
pub fn default_checkpoint_path(manifest: &Path) -> PathBuf {
    let mut p = manifest.as_os_str().to_owned();
    p.push(".checkpoint.json");
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut c = RunCheckpoint::new("m.jsonl".into(), "abc".into());
        c.set_offset(Path::new("a.jsonl"), 10);
        c.set_offset(Path::new("a.jsonl"), 20);
        c.set_offset(Path::new("b.jsonl"), 5);
        c.save(&path).unwrap();
        let back = RunCheckpoint::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.offset(Path::new("a.jsonl")), 20);
        assert_eq!(back.offset(Path::new("zzz")), 0);
        assert!(RunCheckpoint::load_if_exists(&dir.path().join("none")).unwrap().is_none());
    }

    #[test]
    fn corrupt_checkpoint_is_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "{").unwrap();
        assert!(matches!(RunCheckpoint::load(f.path()), Err(PipelineError::Checkpoint(_))));
    }
}
