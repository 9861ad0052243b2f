//! Corpus manifests: one JSON object per line.
//!
//! ```text
//! {"utterance_id":"spk0_utt000","audio_path":"spk0_utt000.wav","speaker_id":"spk0",
//!  "phoneme_ids":[0,5,3,0],"durations":[6,8,7,5],"landmark_path":"spk0_utt000.lmk"}
//! ```
//!
//! Keys: `utterance_id`, `audio_path`, `speaker_id`, `phoneme_ids`,
//! `durations`, optional `landmark_path` and `transcript`. Relative paths are
//! resolved against the manifest's directory. Blank lines are ignored.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub audio_path: PathBuf,
    pub speaker_id: String,
    pub phoneme_ids: Vec<u32>,
    pub durations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

impl ManifestRecord {
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(format!("record {:?}: {msg}", self.utterance_id)));
        if self.utterance_id.is_empty() {
            return Err(Error::Manifest("record with empty utterance_id".into()));
        }
        if self.phoneme_ids.is_empty() {
            return bad("no phonemes".into());
        }
        if self.durations.len() != self.phoneme_ids.len() {
            return bad(format!(
                "{} durations for {} phonemes",
                self.durations.len(),
                self.phoneme_ids.len()
            ));
        }
        if self.durations.iter().all(|&d| d == 0) {
            return bad("all durations are zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl CorpusManifest {
    /// Validates records that are not yet tied to files on disk.
    pub fn from_records(records: Vec<ManifestRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Manifest("no records".into()));
        }
        let mut seen = HashSet::new();
        for r in &records {
            r.check()?;
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate utterance_id {:?}", r.utterance_id)));
            }
        }
        Ok(Self {
            records,
            root: PathBuf::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Manifest(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Reads and validates a manifest; every referenced file must exist.
pub fn load_corpus(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ManifestRecord =
            serde_json::from_str(line).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
        records.push(r);
    }
    let mut m = CorpusManifest::from_records(records)?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &m.records {
        let files = std::iter::once(&r.audio_path).chain(r.landmark_path.as_ref());
        for f in files {
            let full = m.resolve(f);
            if !full.is_file() {
                return Err(Error::Manifest(format!(
                    "record {:?}: missing file {}",
                    r.utterance_id,
                    full.display()
                )));
            }
        }
    }
    Ok(m)
}
