//! Checkpoint container.
//!
//! A checkpoint is a single safetensors file. Tensors are stored under
//! prefixed names (`model.*` for weights, `opt.*` for optimizer moments, plus
//! model-specific groups such as `codebook.*`), and the safetensors string
//! metadata carries:
//!
//! | key              | value                                             |
//! |------------------|---------------------------------------------------|
//! | `format`         | always `avatar-checkpoint`                        |
//! | `format_version` | container version, currently `1`                  |
//! | `kind`           | `tts`, `pllm` or `motion`                         |
//! | `config_hash`    | hash of the model's own config section            |
//! | `feature_hash`   | hash of the feature front end it was trained with |
//! | `step`           | completed training steps                          |
//! | `config`         | the model config section as JSON                  |
//!
//! Any other metadata keys are model-specific and preserved verbatim.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use candle_core::{Device, Tensor};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "avatar-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tts,
    Pllm,
    Motion,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tts => "tts",
            ModelKind::Pllm => "pllm",
            ModelKind::Motion => "motion",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "tts" => Ok(ModelKind::Tts),
            "pllm" => Ok(ModelKind::Pllm),
            "motion" => Ok(ModelKind::Motion),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config_hash: String,
    pub feature_hash: String,
    pub step: usize,
    pub config_json: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: HashMap<String, Tensor>,
}

const RESERVED: [&str; 7] = [
    "format",
    "format_version",
    "kind",
    "config_hash",
    "feature_hash",
    "step",
    "config",
];

impl Checkpoint {
    pub fn new(kind: ModelKind, config_hash: String, feature_hash: String, config_json: String) -> Self {
        Self {
            kind,
            config_hash,
            feature_hash,
            step: 0,
            config_json,
            meta: BTreeMap::new(),
            tensors: HashMap::new(),
        }
    }

    pub fn insert_all(&mut self, tensors: BTreeMap<String, Tensor>) {
        self.tensors.extend(tensors);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key}")))
    }

    /// Writes the container atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut metadata: HashMap<String, String> = self.meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        metadata.insert("format".into(), CHECKPOINT_FORMAT.into());
        metadata.insert("format_version".into(), CHECKPOINT_VERSION.to_string());
        metadata.insert("kind".into(), self.kind.as_str().into());
        metadata.insert("config_hash".into(), self.config_hash.clone());
        metadata.insert("feature_hash".into(), self.feature_hash.clone());
        metadata.insert("step".into(), self.step.to_string());
        metadata.insert("config".into(), self.config_json.clone());

        let mut names: Vec<&String> = self.tensors.keys().collect();
        names.sort();
        let data: Vec<(&str, Tensor)> = names
            .into_iter()
            .map(|n| Ok((n.as_str(), self.tensors[n].contiguous()?)))
            .collect::<Result<_>>()?;
        let bytes = safetensors::serialize(data.iter().map(|(n, t)| (*n, t)), Some(metadata))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (_, header) = safetensors::SafeTensors::read_metadata(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let meta = header
            .metadata()
            .clone()
            .ok_or_else(|| Error::Checkpoint(format!("{}: no metadata", path.display())))?;
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("{}: missing metadata {k}", path.display())))
        };
        if get("format")? != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: not an avatar checkpoint",
                path.display()
            )));
        }
        let version: u32 = get("format_version")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad format_version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: container version {version}, this build reads {CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
        let step = get("step")?.parse().map_err(|_| Error::Checkpoint("bad step".into()))?;
        let extra = meta
            .iter()
            .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Self {
            kind: ModelKind::parse(&get("kind")?)?,
            config_hash: get("config_hash")?,
            feature_hash: get("feature_hash")?,
            step,
            config_json: get("config")?,
            meta: extra,
            tensors,
        })
    }

    /// Loads a checkpoint of `kind`, refusing a feature-hash mismatch unless
    /// `force` is set.
    pub fn load_expecting(path: &Path, kind: ModelKind, feature_hash: Option<&str>, force: bool) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.kind != kind {
            return Err(Error::Checkpoint(format!(
                "{}: expected a {kind} checkpoint, found {}",
                path.display(),
                ck.kind
            )));
        }
        if let Some(expected) = feature_hash {
            if expected != ck.feature_hash && !force {
                return Err(Error::ConfigMismatch {
                    path: path.to_path_buf(),
                    expected: expected.to_string(),
                    found: ck.feature_hash.clone(),
                });
            }
        }
        Ok(ck)
    }

    pub fn config<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_str(&self.config_json).map_err(|e| Error::Checkpoint(format!("bad config: {e}")))
    }
}
