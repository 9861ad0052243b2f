//! Text-to-talking-avatar synthesis at desk scale.
//!
//! The crate is organized along the synthesis path:
//!
//! * [`audio`]: waveform/mel front end, pitch tracking, alignment, Griffin-Lim.
//! * [`tts`]: disentangled TTS (text, timbre and VQ prosody encoders, mel
//!   decoder, LSGAN discriminator) and its stage-1 trainer.
//! * [`pllm`]: causal transformer over prosody codes, prompted by reference
//!   speech.
//! * [`motion`]: audio features to 68-point landmarks through a conditional
//!   VAE and an identity-specific residual postnet.
//! * [`render`]: schematic landmark rasterizer and AVI muxer.
//! * [`pipeline`]: corpus manifests, end-to-end synthesis, metrics and probes.

pub mod audio;
pub mod config;
pub mod error;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod pllm;
pub mod render;
pub mod tts;

pub use error::{Error, Result};
