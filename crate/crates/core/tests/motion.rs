use avatar_core::audio::{compute_mel, PitchContour, Waveform};
use avatar_core::config::{FeatureConfig, MotionConfig, MotionModelConfig};
use avatar_core::motion::{
    landmarks_tensor, vae_loss, AudioFeatureSequence, LandmarkSequence, LatentMode, MotionExample, MotionModel,
    MotionTrainer, Normalization, FRAME_DIM,
};
use avatar_core::nn::to_vec2;
use avatar_core::pipeline::{generate_toy_utterances, ToyCorpusConfig};
use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> MotionModelConfig {
    MotionModelConfig {
        d_feat: 16,
        hidden: 32,
        latent: 4,
        kernel_size: 3,
        layers: 1,
        postnet_hidden: 16,
    }
}

fn tone(seconds: f64) -> Waveform {
    let n = (16_000.0 * seconds) as usize;
    Waveform::new(
        (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16_000.0).sin()) as f32)
            .collect(),
        16_000,
    )
}

fn noise(seconds: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = (16_000.0 * seconds) as usize;
    Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000)
}

fn feature_mean(f: &AudioFeatureSequence) -> Vec<f64> {
    let rows = to_vec2(&f.content).unwrap();
    let d = rows[0].len();
    (0..d)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Observed 7.40 on the default-size untrained model (seed 0).
const TONE_NOISE_MARGIN: f64 = 3.5;

#[test]
fn feature_length_follows_mel_framing() {
    let f = FeatureConfig::default();
    let model = MotionModel::new(&MotionModelConfig::default(), f.n_mels, 0, DType::F32).unwrap();
    let wave = tone(1.0);
    let feats = model.encode_audio_features(&wave, &f).unwrap();
    assert_eq!(feats.len(), compute_mel(&wave, &f).unwrap().n_frames());
    let again = model.encode_audio_features(&wave, &f).unwrap();
    assert_eq!(to_vec2(&feats.content).unwrap(), to_vec2(&again.content).unwrap());
}

#[test]
fn empty_waveform_rejected() {
    let f = FeatureConfig::default();
    let model = MotionModel::new(&small(), f.n_mels, 0, DType::F32).unwrap();
    assert!(model.encode_audio_features(&Waveform::new(vec![], 16_000), &f).is_err());
}

#[test]
fn tone_and_noise_features_differ() {
    let f = FeatureConfig::default();
    let model = MotionModel::new(&MotionModelConfig::default(), f.n_mels, 0, DType::F32).unwrap();
    let a = feature_mean(&model.encode_audio_features(&tone(0.5), &f).unwrap());
    let b = feature_mean(&model.encode_audio_features(&noise(0.5), &f).unwrap());
    let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(dist > TONE_NOISE_MARGIN, "feature-mean distance {dist:.4}");
}

#[test]
fn mean_mode_is_deterministic_and_length_preserving() {
    let f = FeatureConfig::default();
    let model = MotionModel::new(&small(), f.n_mels, 2, DType::F32).unwrap();
    let feats = model.encode_audio_features(&tone(0.3), &f).unwrap();
    let a = model.audio_to_motion(&feats, LatentMode::Mean, 80.0).unwrap();
    let b = model.audio_to_motion(&feats, LatentMode::Mean, 80.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_frames(), feats.len());

    let s1 = model.audio_to_motion(&feats, LatentMode::Sample(5), 80.0).unwrap();
    assert_eq!(s1, model.audio_to_motion(&feats, LatentMode::Sample(5), 80.0).unwrap());
    assert_ne!(s1, a);
}

#[test]
fn single_frame_in_single_frame_out() {
    let model = MotionModel::new(&small(), 80, 3, DType::F32).unwrap();
    let feats = AudioFeatureSequence {
        content: Tensor::zeros((1, 16), DType::F32, &Device::Cpu).unwrap(),
        pitch: PitchContour {
            f0: vec![0.0],
            voiced: vec![false],
        },
    };
    assert_eq!(
        model
            .vae_audio_to_motion(&feats, LatentMode::Mean, 80.0)
            .unwrap()
            .n_frames(),
        1
    );
}

#[test]
fn untrained_postnet_is_the_identity() {
    let model = MotionModel::new(&small(), 80, 4, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in [1, 3, 17] {
        let pts: Vec<f32> = (0..t * FRAME_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lms = LandmarkSequence::new(pts, 80.0, Normalization::default()).unwrap();
        let out = model.postnet_refine(&lms).unwrap();
        assert_eq!(out.points(), lms.points());
    }
}

fn landmarks(rng: &mut ChaCha8Rng, t: usize) -> LandmarkSequence {
    let pts = (0..t * FRAME_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    LandmarkSequence::new(pts, 80.0, Normalization::default()).unwrap()
}

#[test]
fn vae_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = landmarks(&mut rng, 4);
    let zeros = vec![vec![0.0; 3]; 4];
    let r = vae_loss(&x, &x, &zeros, &zeros, 0.5).unwrap();
    assert_eq!((r.recon, r.kl, r.total), (0.0, 0.0, 0.0));
    assert!(vae_loss(&x, &landmarks(&mut rng, 3), &zeros, &zeros, 0.5).is_err());
}

#[test]
fn kl_matches_closed_form_and_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = landmarks(&mut rng, 5);
    for _ in 0..100 {
        let mu: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let lv: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mut expected = 0.0;
        for (m, l) in mu.iter().flatten().zip(lv.iter().flatten()) {
            expected += 0.5 * (m * m + l.exp() - 1.0 - l);
        }
        expected /= 5.0;
        let r = vae_loss(&x, &x, &mu, &lv, 1.0).unwrap();
        assert!((r.kl - expected).abs() < 1e-9 * expected.max(1.0));
        assert!(r.kl >= 0.0);
        assert!((r.total - (r.recon + r.kl)).abs() < 1e-12);
    }
}

fn clip() -> (FeatureConfig, MotionExample) {
    let f = FeatureConfig::default();
    let toy = ToyCorpusConfig {
        speakers: 1,
        utterances_per_speaker: 1,
        ..Default::default()
    };
    let u = generate_toy_utterances(&toy, &f).unwrap().remove(0);
    let ex = MotionExample::from_wave(&u.wave, u.landmarks, &f).unwrap();
    (f, ex)
}

fn trainer(vae_steps: usize, postnet_steps: usize, ex: &MotionExample, f: &FeatureConfig) -> MotionTrainer {
    let mut cfg = MotionConfig {
        model: small(),
        ..Default::default()
    };
    cfg.train.vae_steps = vae_steps;
    cfg.train.postnet_steps = postnet_steps;
    cfg.train.lr = 3e-3;
    cfg.train.seed = 7;
    let mut t = MotionTrainer::new(&cfg, f, DType::F32).unwrap();
    t.set_normalization(ex.landmarks.normalization);
    t
}

fn distance_to_template(out: &LandmarkSequence, template: &[f32]) -> f64 {
    out.mean_frame()
        .iter()
        .zip(template)
        .map(|(a, b)| (a - b).abs() as f64)
        .sum::<f64>()
        / template.len() as f64
}

#[test]
fn postnet_moves_geometry_toward_the_identity_template() {
    let (f, ex) = clip();
    let mut t = trainer(20, 200, &ex, &f);
    t.train(std::slice::from_ref(&ex), |_, _, _| Ok(())).unwrap();
    let feats = t.model.features_from(&ex.mel, &ex.pitch).unwrap();
    let before = t
        .model
        .vae_audio_to_motion(&feats, LatentMode::Mean, ex.landmarks.fps)
        .unwrap();
    let after = t.model.postnet_refine(&before).unwrap();
    let template = ex.landmarks.mean_frame();
    let (d0, d1) = (
        distance_to_template(&before, &template),
        distance_to_template(&after, &template),
    );
    assert!(d1 < d0, "template distance {d0:.4} before postnet, {d1:.4} after");
    assert!(after.mae(&ex.landmarks).unwrap() < before.mae(&ex.landmarks).unwrap());
}

/// Observed 0.0307 on the overfit clip, whose fit MAE is 0.0034.
const SHUFFLE_FLOOR: f64 = 0.015;

#[test]
fn shuffled_audio_changes_the_motion() {
    let (f, ex) = clip();
    let mut t = trainer(400, 0, &ex, &f);
    t.train(std::slice::from_ref(&ex), |_, _, _| Ok(())).unwrap();
    let feats = t.model.features_from(&ex.mel, &ex.pitch).unwrap();
    let out = t
        .model
        .vae_audio_to_motion(&feats, LatentMode::Mean, ex.landmarks.fps)
        .unwrap();

    let mut order: Vec<usize> = (0..feats.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let idx = Tensor::new(order.iter().map(|&i| i as u32).collect::<Vec<_>>(), &Device::Cpu).unwrap();
    let shuffled = AudioFeatureSequence {
        content: feats.content.index_select(&idx, 0).unwrap(),
        pitch: PitchContour {
            f0: order.iter().map(|&i| feats.pitch.f0[i]).collect(),
            voiced: order.iter().map(|&i| feats.pitch.voiced[i]).collect(),
        },
    };
    let moved = t
        .model
        .vae_audio_to_motion(&shuffled, LatentMode::Mean, ex.landmarks.fps)
        .unwrap();
    let fit = out.mae(&ex.landmarks).unwrap();
    let diff = moved.mae(&out).unwrap();
    assert!(diff > SHUFFLE_FLOOR, "shuffle MAE {diff:.4} (fit MAE {fit:.4})");
}

#[test]
fn landmark_tensor_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lms = landmarks(&mut rng, 3);
    let t = landmarks_tensor(&lms, DType::F32).unwrap();
    assert_eq!(t.dims(), &[3, FRAME_DIM]);
    let flat: Vec<f32> = t.flatten_all().unwrap().to_vec1().unwrap();
    assert_eq!(flat, lms.points());
}
