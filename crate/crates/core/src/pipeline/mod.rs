//! Corpus ingestion, end-to-end synthesis, metrics and probes.

mod corpus;
mod manifest;
mod metrics;
mod probe;
mod synth;
mod toy;
mod train;

pub use corpus::{load_items, motion_examples, tts_examples, CorpusItem};
pub use manifest::{load_corpus, CorpusManifest, ManifestRecord};
pub use metrics::{codebook_perplexity, cosine_similarity, eval_speaker_similarity};
pub use probe::{disentanglement_probe, linear_probe_accuracy, ProbeReport};
pub use synth::{default_output, synthesize, uniform_durations, SynthesisOutput, SynthesisRequest};
pub use toy::{
    face_template, generate_toy_utterances, write_toy_corpus, ToyCorpusConfig, ToyUtterance, SILENCE, TIMBRE_EDGE_HZ,
};
pub use train::{eval_corpus, probe_corpus, train_motion, train_pllm, train_tts, EvalReport};
