//! Disentangled zero-shot TTS.
//!
//! Speech is split into three streams that meet only in the mel decoder:
//! phoneme content from the text encoder, a single global timbre vector
//! pooled from a reference mel of the same speaker, and phoneme-rate prosody
//! codes obtained by quantizing the low mel bands after per-phoneme averaging.

mod disc;
mod loss;
mod model;
mod train;
mod vq;

use candle_core::Tensor;

pub use disc::{lsgan_losses, lsgan_losses_tensor, Discriminator};
pub use loss::{stage1_loss, stage1_loss_tensor, Stage1LossReport, VqTerms};
pub use model::{
    averaging_matrix, expansion_matrix, pool_timbre, position_features, Stage1Forward, TtsModel, MEL_OFFSET, MEL_SCALE,
};
pub use train::{load_tts_checkpoint, prepare_examples, Stage1Trainer, TtsExample};
pub use vq::{straight_through, Codebook};

use crate::error::{Error, Result};

/// Phoneme vocabulary indices of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence(Vec<u32>);

impl PhonemeSequence {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("phoneme sequence is empty"));
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `(L, d_model)` content vectors, one per phoneme.
#[derive(Debug, Clone)]
pub struct ContentRepr(pub Tensor);

impl ContentRepr {
    pub fn len(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_rows(&self) -> Result<Vec<Vec<f64>>> {
        crate::nn::to_vec2(&self.0)
    }
}

/// Global speaker vector of dimension `d_timbre`.
#[derive(Debug, Clone)]
pub struct TimbreVector(pub Tensor);

impl TimbreVector {
    pub fn from_values(values: &[f32]) -> Result<Self> {
        Ok(Self(Tensor::from_slice(
            values,
            values.len(),
            &candle_core::Device::Cpu,
        )?))
    }

    pub fn dim(&self) -> usize {
        self.0.elem_count()
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        crate::nn::to_vec1(&self.0)
    }
}

/// Phoneme-rate prosody codes, each below the codebook size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProsodyCodeSequence {
    codes: Vec<u32>,
    codebook_size: usize,
}

impl ProsodyCodeSequence {
    pub fn new(codes: Vec<u32>, codebook_size: usize) -> Result<Self> {
        if let Some(&c) = codes.iter().find(|&&c| c as usize >= codebook_size) {
            return Err(Error::invalid(format!(
                "prosody code {c} outside codebook of {codebook_size}"
            )));
        }
        Ok(Self { codes, codebook_size })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}
