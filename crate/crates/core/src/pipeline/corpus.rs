use super::manifest::{CorpusManifest, ManifestRecord};
use crate::audio::{align_frames_to_phonemes, compute_mel, read_wav, FrameToPhonemeMap, MelSpectrogram, Waveform};
use crate::config::FeatureConfig;
use crate::error::{Error, Result};
use crate::motion::{LandmarkSequence, MotionExample};
use crate::tts::{prepare_examples, PhonemeSequence, TtsExample};

/// A manifest record with its audio decoded and features computed.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub record: ManifestRecord,
    pub wave: Waveform,
    pub mel: MelSpectrogram,
    pub align: FrameToPhonemeMap,
    pub landmarks: Option<LandmarkSequence>,
}

fn load_item(m: &CorpusManifest, r: &ManifestRecord, features: &FeatureConfig) -> Result<CorpusItem> {
    let wave = read_wav(&m.resolve(&r.audio_path))?;
    let mel = compute_mel(&wave, features)?;
    let align = align_frames_to_phonemes(mel.n_frames(), &r.durations, features.align_tolerance)?;
    let landmarks = match &r.landmark_path {
        Some(p) => Some(LandmarkSequence::load(&m.resolve(p))?),
        None => None,
    };
    Ok(CorpusItem {
        record: r.clone(),
        wave,
        mel,
        align,
        landmarks,
    })
}

/// Loads every record. A bad record aborts under `strict`; otherwise it is
/// skipped with a warning.
pub fn load_items(m: &CorpusManifest, features: &FeatureConfig, strict: bool) -> Result<Vec<CorpusItem>> {
    let mut out = Vec::with_capacity(m.len());
    for r in &m.records {
        match load_item(m, r, features) {
            Ok(item) => out.push(item),
            Err(e) if !strict && !matches!(e, Error::Io { .. }) => {
                log::warn!("skipping {}: {e}", r.utterance_id);
            }
            Err(e) => {
                return Err(Error::Manifest(format!("record {:?}: {e}", r.utterance_id)));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Manifest("no usable records".into()));
    }
    Ok(out)
}

pub fn tts_examples(items: &[CorpusItem]) -> Result<Vec<TtsExample>> {
    let rows = items
        .iter()
        .map(|it| {
            Ok((
                it.record.speaker_id.clone(),
                PhonemeSequence::new(it.record.phoneme_ids.clone())?,
                it.mel.clone(),
                it.align.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_examples(rows)
}

/// Motion clips for one speaker; records without landmarks are ignored.
pub fn motion_examples(items: &[CorpusItem], speaker: &str, features: &FeatureConfig) -> Result<Vec<MotionExample>> {
    let out = items
        .iter()
        .filter(|it| it.record.speaker_id == speaker)
        .filter_map(|it| {
            it.landmarks
                .as_ref()
                .map(|l| MotionExample::from_wave(&it.wave, l.clone(), features))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Manifest(format!("speaker {speaker:?} has no landmark clips")));
    }
    Ok(out)
}
