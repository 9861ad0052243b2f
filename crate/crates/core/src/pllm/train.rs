use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use rand::Rng;

use super::model::{cross_entropy, PllmModel};
use super::PllmInput;
use crate::config::{hash_json, FeatureConfig, PllmConfig};
use crate::error::{Error, Result};
use crate::nn::{scalar, step_rng, Adam, Checkpoint, ModelKind};
use crate::tts::{ContentRepr, TtsExample, TtsModel};

const MAX_GRAD_NORM: f64 = 1.0;

/// A prompted input and the full target code sequence.
#[derive(Debug, Clone)]
pub struct PllmExample {
    pub input: PllmInput,
    pub target: Vec<u32>,
}

/// Encodes every utterance with the frozen TTS model and pairs it with a
/// prompt from another utterance of the same speaker (itself if the speaker
/// has one utterance).
pub fn prepare_pllm_examples(tts: &TtsModel, examples: &[TtsExample]) -> Result<Vec<PllmExample>> {
    let mut encoded = Vec::with_capacity(examples.len());
    for ex in examples {
        let content = ContentRepr(tts.content_tensor(&ex.phonemes)?.detach());
        let (codes, _) = tts.encode_prosody(&ex.bands, &ex.align)?;
        encoded.push((content, codes));
    }
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        by_speaker.entry(ex.speaker.as_str()).or_default().push(i);
    }
    let mut out = vec![None; examples.len()];
    for idx in by_speaker.values() {
        for (j, &i) in idx.iter().enumerate() {
            let p = idx[(j + 1) % idx.len()];
            let (content, codes) = &encoded[i];
            let (p_content, p_codes) = &encoded[p];
            out[i] = Some(PllmExample {
                input: PllmInput::new(p_codes.clone(), p_content.clone(), content.clone())?,
                target: codes.codes().to_vec(),
            });
        }
    }
    Ok(out.into_iter().map(|e| e.expect("every example paired")).collect())
}

/// Teacher-forced cross-entropy training.
pub struct PllmTrainer {
    pub model: PllmModel,
    opt: Adam,
    cfg: PllmConfig,
    feature_hash: String,
    step: usize,
}

impl PllmTrainer {
    pub fn new(
        cfg: &PllmConfig,
        codebook_size: usize,
        d_content: usize,
        feature_hash: &str,
        dtype: DType,
    ) -> Result<Self> {
        Ok(Self {
            model: PllmModel::new(&cfg.model, codebook_size, d_content, cfg.train.seed, dtype)?,
            opt: Adam::new(cfg.train.lr).with_clip(MAX_GRAD_NORM),
            cfg: cfg.clone(),
            feature_hash: feature_hash.to_string(),
            step: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Cross-entropy over every target position of `batch`, as a graph.
    pub fn batch_loss(model: &PllmModel, batch: &[&PllmExample]) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut logits = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for ex in batch {
            let l = ex.target.len();
            if l != ex.input.target_len() {
                return Err(Error::invalid(format!(
                    "{l} target codes for {} target phonemes",
                    ex.input.target_len()
                )));
            }
            logits.push(model.logits_tensor(&ex.input, &ex.target[..l - 1])?);
            targets.extend_from_slice(&ex.target);
        }
        cross_entropy(&Tensor::cat(&logits, 0)?, &targets)
    }

    pub fn train_step(&mut self, examples: &[PllmExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let mut rng = step_rng(self.cfg.train.seed, self.step as u64, 0);
        let batch: Vec<&PllmExample> = (0..self.cfg.train.batch_size.max(1))
            .map(|_| &examples[rng.random_range(0..examples.len())])
            .collect();
        let loss = Self::batch_loss(&self.model, &batch)?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                what: "prosody LM cross-entropy",
            });
        }
        let grads = loss.backward()?;
        self.opt.step(self.model.params(), &grads)?;
        self.step += 1;
        Ok(value)
    }

    pub fn train(
        &mut self,
        examples: &[PllmExample],
        mut on_step: impl FnMut(usize, f64) -> Result<()>,
    ) -> Result<f64> {
        let mut last = f64::NAN;
        while self.step < self.cfg.train.max_steps {
            last = self.train_step(examples)?;
            on_step(self.step, last)?;
        }
        Ok(last)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let json = serde_json::to_string(&self.cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut ck = Checkpoint::new(
            ModelKind::Pllm,
            hash_json(&self.cfg.model),
            self.feature_hash.clone(),
            json,
        );
        ck.step = self.step;
        ck.insert_all(self.model.params().snapshot("model."));
        ck.insert_all(self.opt.state_tensors("opt."));
        ck.meta.insert("adam_step".into(), self.opt.step_count().to_string());
        ck.meta
            .insert("codebook_size".into(), self.model.codebook_size().to_string());
        ck.meta.insert("d_content".into(), self.model.d_content().to_string());
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)
    }

    pub fn resume(ck: &Checkpoint, dtype: DType) -> Result<Self> {
        let cfg: PllmConfig = ck.config()?;
        let (k, d) = dims(ck)?;
        let mut tr = Self::new(&cfg, k, d, &ck.feature_hash, dtype)?;
        tr.model.params().restore(&ck.tensors, "model.")?;
        let opt: std::collections::HashMap<String, Tensor> = ck
            .tensors
            .iter()
            .filter(|(n, _)| n.starts_with("opt."))
            .map(|(n, t)| Ok((n.clone(), t.to_dtype(dtype)?)))
            .collect::<Result<_>>()?;
        let step = ck
            .meta_value("adam_step")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad adam_step".into()))?;
        tr.opt.restore(&opt, "opt.", step);
        tr.step = ck.step;
        Ok(tr)
    }
}

fn dims(ck: &Checkpoint) -> Result<(usize, usize)> {
    let get = |k: &str| -> Result<usize> {
        ck.meta_value(k)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad {k}")))
    };
    Ok((get("codebook_size")?, get("d_content")?))
}

/// Loads a P-LLM for inference, refusing a front-end mismatch unless `force`.
pub fn load_pllm_checkpoint(
    path: &Path,
    features: Option<&FeatureConfig>,
    force: bool,
    dtype: DType,
) -> Result<PllmModel> {
    let hash = features.map(|f| f.hash());
    let ck = Checkpoint::load_expecting(path, ModelKind::Pllm, hash.as_deref(), force)?;
    let cfg: PllmConfig = ck.config()?;
    let (k, d) = dims(&ck)?;
    let model = PllmModel::new(&cfg.model, k, d, cfg.train.seed, dtype)?;
    model.params().restore(&ck.tensors, "model.")?;
    Ok(model)
}
