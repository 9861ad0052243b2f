//! Synthetic two-speaker corpus for tests and demos.
//!
//! Each phoneme is a harmonic vowel with two resonances. Speakers share the
//! pitch, energy and duration distributions and differ only in a spectral
//! envelope applied above [`TIMBRE_EDGE_HZ`], i.e. outside the prosody bands.
//! Landmarks are a fixed 68-point face whose mouth opening follows the frame
//! energy of the audio.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{CorpusManifest, ManifestRecord};
use crate::audio::{num_frames, write_wav, Waveform};
use crate::config::FeatureConfig;
use crate::error::{Error, Result};
use crate::motion::{LandmarkSequence, Normalization, FRAME_DIM, NUM_LANDMARKS};

/// Frequency above which speakers' envelopes diverge.
pub const TIMBRE_EDGE_HZ: f64 = 900.0;
/// Phoneme id reserved for silence.
pub const SILENCE: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCorpusConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    /// Phoneme ids are `1..=n_phonemes`; 0 is silence.
    pub n_phonemes: u32,
    pub min_phonemes: usize,
    pub max_phonemes: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            speakers: 2,
            utterances_per_speaker: 8,
            n_phonemes: 12,
            min_phonemes: 4,
            max_phonemes: 8,
            min_duration: 4,
            max_duration: 10,
            seed: 7,
        }
    }
}

/// One generated utterance.
#[derive(Debug, Clone)]
pub struct ToyUtterance {
    pub id: String,
    pub speaker: usize,
    pub phonemes: Vec<u32>,
    pub durations: Vec<usize>,
    pub wave: Waveform,
    pub landmarks: LandmarkSequence,
}

fn formants(ph: u32) -> (f64, f64) {
    let i = ph as f64;
    (300.0 + 53.0 * ((i * 7.0) % 11.0), 1000.0 + 140.0 * ((i * 5.0) % 13.0))
}

fn resonance(f: f64, center: f64, width: f64) -> f64 {
    (-((f - center) / width).powi(2)).exp()
}

fn speaker_gain(f: f64, speaker: usize, speakers: usize) -> f64 {
    let w = ((f - TIMBRE_EDGE_HZ) / 200.0).clamp(0.0, 1.0);
    let pos = if speakers > 1 {
        speaker as f64 / (speakers - 1) as f64
    } else {
        0.0
    };
    let center = 1400.0 + 2000.0 * pos;
    let tilt = 1.0 - 0.5 * pos;
    let gain = tilt * (0.15 + 1.5 * resonance(f, center, 350.0));
    (1.0 - w) + w * gain
}

fn phoneme_gain(f: f64, ph: u32) -> f64 {
    if ph == SILENCE {
        return 0.0;
    }
    let (f1, f2) = formants(ph);
    0.05 + resonance(f, f1, 120.0) + 0.6 * resonance(f, f2, 250.0)
}

/// Synthesizes the waveform for one phoneme string. `f0` and `energy` are
/// per phoneme; within a phoneme both are linearly interpolated to the next
/// phoneme's value.
#[allow(clippy::needless_range_loop)]
fn synthesize_wave(
    phonemes: &[u32],
    durations: &[usize],
    f0: &[f64],
    energy: &[f64],
    speaker: usize,
    speakers: usize,
    features: &FeatureConfig,
) -> Vec<f32> {
    let sr = features.sample_rate as f64;
    let hop = features.hop_length;
    let total: usize = durations.iter().sum();
    let n = (total - 1) * hop + hop / 2;
    let mut out = vec![0f32; n];
    let mut phase = 0.0f64;
    let mut start = 0usize;
    for (p, &d) in durations.iter().enumerate() {
        let seg_start = start * hop;
        let seg_end = ((start + d) * hop).min(n);
        let next = (p + 1).min(phonemes.len() - 1);
        for s in seg_start..seg_end {
            let frac = (s - seg_start) as f64 / (seg_end - seg_start).max(1) as f64;
            let pitch = f0[p] + (f0[next] - f0[p]) * frac * 0.5;
            let amp = energy[p] * (1.0 - 0.3 * frac) + energy[next] * 0.3 * frac;
            phase += 2.0 * PI * pitch / sr;
            let mut v = 0.0;
            let mut h = 1.0;
            while h * pitch < sr / 2.0 - 200.0 {
                let f = h * pitch;
                let g = phoneme_gain(f, phonemes[p]) * speaker_gain(f, speaker, speakers);
                v += g * (h * phase).sin();
                h += 1.0;
            }
            out[s] = (0.08 * amp * v) as f32;
        }
        start += d;
    }
    for v in out.iter_mut() {
        *v = v.clamp(-0.99, 0.99);
    }
    out
}

/// Neutral 68-point face in normalized coordinates (y up).
pub fn face_template() -> Vec<[f32; 3]> {
    let mut pts: Vec<[f32; 3]> = Vec::with_capacity(NUM_LANDMARKS);
    let arc = |cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64, n: usize| -> Vec<[f32; 3]> {
        (0..n)
            .map(|i| {
                let a = a0 + (a1 - a0) * i as f64 / (n - 1) as f64;
                [
                    (cx + rx * a.cos()) as f32,
                    (cy + ry * a.sin()) as f32,
                    (0.1 * a.sin().abs()) as f32,
                ]
            })
            .collect()
    };
    // jaw 0..17
    pts.extend(arc(0.0, 0.15, 0.8, 0.85, PI, 2.0 * PI, 17));
    // brows 17..27
    pts.extend(arc(-0.35, 0.45, 0.25, 0.08, PI * 0.9, PI * 0.1, 5));
    pts.extend(arc(0.35, 0.45, 0.25, 0.08, PI * 0.9, PI * 0.1, 5));
    // nose bridge 27..31
    for i in 0..4 {
        pts.push([0.0, 0.35 - 0.1 * i as f32, 0.15 + 0.03 * i as f32]);
    }
    // nose base 31..36
    for i in 0..5 {
        pts.push([-0.12 + 0.06 * i as f32, -0.05, 0.15]);
    }
    // eyes 36..48
    for cx in [-0.35, 0.35] {
        let eye = (0..6).map(|i| {
            let a = PI - 2.0 * PI * i as f64 / 6.0;
            [(cx + 0.12 * a.cos()) as f32, (0.25 + 0.05 * a.sin()) as f32, 0.05]
        });
        pts.extend(eye);
    }
    // outer lip 48..60
    pts.extend((0..12).map(|i| {
        let a = PI - 2.0 * PI * i as f64 / 12.0;
        [(0.3 * a.cos()) as f32, (-0.4 + 0.1 * a.sin()) as f32, 0.08]
    }));
    // inner lip 60..68
    pts.extend((0..8).map(|i| {
        let a = PI - 2.0 * PI * i as f64 / 8.0;
        [(0.2 * a.cos()) as f32, (-0.4 + 0.04 * a.sin()) as f32, 0.07]
    }));
    debug_assert_eq!(pts.len(), NUM_LANDMARKS);
    pts
}

/// Landmarks at the mel frame rate: the template scaled per speaker, with the
/// lower lip and jaw lowered in proportion to frame energy.
fn landmarks_for(wave: &[f32], speaker: usize, features: &FeatureConfig) -> Result<LandmarkSequence> {
    let hop = features.hop_length;
    let t = num_frames(wave.len(), hop);
    let template = face_template();
    let widen = 1.0 + 0.06 * speaker as f32;
    let mut energy = Vec::with_capacity(t);
    for f in 0..t {
        let c = f * hop;
        let lo = c.saturating_sub(hop);
        let hi = (c + hop).min(wave.len());
        let e = if hi > lo {
            (wave[lo..hi].iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / (hi - lo) as f64).sqrt()
        } else {
            0.0
        };
        energy.push(e);
    }
    let peak = energy.iter().cloned().fold(1e-9, f64::max);
    let mut pts = Vec::with_capacity(t * FRAME_DIM);
    for &e in &energy {
        let open = (0.25 * e / peak) as f32;
        for (i, p) in template.iter().enumerate() {
            let mut q = [p[0] * widen, p[1], p[2]];
            let lower_lip = (54..=59).contains(&i) || (64..=67).contains(&i) || i == 48 || i == 60;
            if (5..=11).contains(&i) {
                q[1] -= open * 0.5;
            } else if lower_lip && i != 48 && i != 54 && i != 60 && i != 64 {
                q[1] -= open;
            }
            pts.extend_from_slice(&q);
        }
    }
    let fps = features.sample_rate as f32 / hop as f32;
    LandmarkSequence::new(pts, fps, Normalization::default())
}

/// Generates the corpus in memory.
pub fn generate_toy_utterances(cfg: &ToyCorpusConfig, features: &FeatureConfig) -> Result<Vec<ToyUtterance>> {
    features.validate()?;
    if cfg.speakers == 0 || cfg.utterances_per_speaker == 0 || cfg.n_phonemes == 0 {
        return Err(Error::invalid("toy corpus needs speakers, utterances and phonemes"));
    }
    if cfg.min_phonemes == 0
        || cfg.min_phonemes > cfg.max_phonemes
        || cfg.min_duration == 0
        || cfg.min_duration > cfg.max_duration
    {
        return Err(Error::invalid("toy corpus ranges are empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for u in 0..cfg.utterances_per_speaker {
        for s in 0..cfg.speakers {
            let l = rng.random_range(cfg.min_phonemes..=cfg.max_phonemes);
            let mut phonemes = vec![SILENCE];
            phonemes.extend((0..l).map(|_| rng.random_range(1..=cfg.n_phonemes)));
            phonemes.push(SILENCE);
            let durations: Vec<usize> = phonemes
                .iter()
                .map(|_| rng.random_range(cfg.min_duration..=cfg.max_duration))
                .collect();
            let base = rng.random_range(110.0..190.0);
            let f0: Vec<f64> = phonemes.iter().map(|_| base * rng.random_range(0.8..1.25)).collect();
            let energy: Vec<f64> = phonemes
                .iter()
                .map(|&p| if p == SILENCE { 0.0 } else { rng.random_range(0.5..1.0) })
                .collect();
            let samples = synthesize_wave(&phonemes, &durations, &f0, &energy, s, cfg.speakers, features);
            let landmarks = landmarks_for(&samples, s, features)?;
            out.push(ToyUtterance {
                id: format!("spk{s}_utt{u:03}"),
                speaker: s,
                phonemes,
                durations,
                wave: Waveform::new(samples, features.sample_rate),
                landmarks,
            });
        }
    }
    Ok(out)
}

/// Writes WAVs, landmark files and `manifest.jsonl` under `dir`; returns the
/// manifest path.
pub fn write_toy_corpus(dir: &Path, cfg: &ToyCorpusConfig, features: &FeatureConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let utts = generate_toy_utterances(cfg, features)?;
    let mut records = Vec::with_capacity(utts.len());
    for u in &utts {
        let wav = dir.join(format!("{}.wav", u.id));
        let lmk = dir.join(format!("{}.lmk", u.id));
        write_wav(&wav, &u.wave)?;
        u.landmarks.save(&lmk)?;
        records.push(ManifestRecord {
            utterance_id: u.id.clone(),
            audio_path: PathBuf::from(format!("{}.wav", u.id)),
            speaker_id: format!("spk{}", u.speaker),
            phoneme_ids: u.phonemes.clone(),
            durations: u.durations.clone(),
            landmark_path: Some(PathBuf::from(format!("{}.lmk", u.id))),
            transcript: None,
        });
    }
    let path = dir.join("manifest.jsonl");
    CorpusManifest::from_records(records)?.save(&path)?;
    Ok(path)
}
