//! Audio features to 68-point facial landmarks.
//!
//! A small convolutional content encoder over mel frames stands in for a
//! pretrained speech representation. Its output, concatenated with
//! normalized log-f0 and the voiced flag, conditions a per-frame VAE whose
//! decoder runs over the whole sequence at once. An identity-specific
//! residual postnet refines the VAE output; its last layer starts at zero so
//! an untrained postnet is the identity map.

mod landmarks;
mod model;
mod train;

pub use landmarks::{LandmarkSequence, Normalization, COORD_LIMIT, FRAME_DIM, NUM_LANDMARKS};
pub use model::{
    landmarks_tensor, vae_loss, vae_loss_tensor, AudioFeatureSequence, LatentMode, MotionModel, VaeForward,
    VaeLossReport,
};
pub use train::{load_motion_checkpoint, MotionExample, MotionPhase, MotionTrainer};
