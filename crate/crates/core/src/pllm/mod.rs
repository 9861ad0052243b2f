//! Prosody language model: a decoder-only transformer that continues a
//! prosody-code prompt for new text.
//!
//! One packed sequence per example:
//!
//! ```text
//! [prompt_content] [prompt_codes] [sep] [target_content] [target_codes...]
//! ```
//!
//! Every token gets a learned segment embedding and a learned index within
//! its segment. Content rows enter through a linear adapter; codes through an
//! embedding table of size `K`. The prediction for target code `i` is read at
//! the token just before it: the last target-content token for `i = 0`, the
//! target-code token `i - 1` otherwise.

mod model;
mod train;

pub use model::{cross_entropy, PllmModel};
pub use train::{load_pllm_checkpoint, prepare_pllm_examples, PllmExample, PllmTrainer};

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::tts::{ContentRepr, ProsodyCodeSequence};

/// Prompt (reference codes and text) and target text.
#[derive(Debug, Clone)]
pub struct PllmInput {
    pub prompt_codes: ProsodyCodeSequence,
    pub prompt_content: ContentRepr,
    pub target_content: ContentRepr,
}

impl PllmInput {
    pub fn new(
        prompt_codes: ProsodyCodeSequence,
        prompt_content: ContentRepr,
        target_content: ContentRepr,
    ) -> Result<Self> {
        if prompt_codes.len() != prompt_content.len() {
            return Err(Error::invalid(format!(
                "{} prompt codes for {} prompt phonemes",
                prompt_codes.len(),
                prompt_content.len()
            )));
        }
        if target_content.is_empty() {
            return Err(Error::invalid("target content is empty"));
        }
        Ok(Self {
            prompt_codes,
            prompt_content,
            target_content,
        })
    }

    pub fn target_len(&self) -> usize {
        self.target_content.len()
    }
}

/// `(steps, K)` next-code scores.
#[derive(Debug, Clone)]
pub struct PllmLogits(pub Tensor);

impl PllmLogits {
    pub fn rows(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn to_rows(&self) -> Result<Vec<Vec<f64>>> {
        crate::nn::to_vec2(&self.0)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
