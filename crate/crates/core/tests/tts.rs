use avatar_core::audio::{compute_mel, slice_prosody_bands, FrameToPhonemeMap, MelSpectrogram};
use avatar_core::config::{FeatureConfig, TtsConfig, TtsModelConfig};
use avatar_core::nn::{to_vec2, Checkpoint};
use avatar_core::pipeline::{generate_toy_utterances, ToyCorpusConfig};
use avatar_core::tts::{
    lsgan_losses, pool_timbre, prepare_examples, stage1_loss, Codebook, PhonemeSequence, Stage1Trainer, TimbreVector,
    TtsExample, TtsModel,
};
use avatar_core::Error;
use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> TtsModelConfig {
    TtsModelConfig {
        vocab_size: 16,
        d_model: 16,
        d_timbre: 8,
        d_code: 8,
        kernel_size: 3,
        text_layers: 1,
        timbre_layers: 1,
        prosody_layers: 1,
        decoder_layers: 1,
        disc_channels: 8,
        disc_window: 8,
    }
}

fn model() -> TtsModel {
    TtsModel::new(&small(), 8, 80, 1, DType::F32).unwrap()
}

fn random_mel(rng: &mut ChaCha8Rng, t: usize) -> MelSpectrogram {
    let v = (0..t * 80).map(|_| rng.random_range(-10.0f32..2.0)).collect();
    MelSpectrogram::new(v, t, 80, 200, 16_000).unwrap()
}

fn constant_mel(t: usize, value: f32) -> MelSpectrogram {
    MelSpectrogram::new(vec![value; t * 80], t, 80, 200, 16_000).unwrap()
}

#[test]
fn single_phoneme_encodes_to_one_row() {
    let tts = model();
    let c = tts.encode_text(&PhonemeSequence::new(vec![5]).unwrap()).unwrap();
    assert_eq!(c.0.dims(), &[1, 16]);
}

#[test]
fn text_encoding_is_deterministic_and_position_sensitive() {
    let tts = model();
    let a = tts
        .encode_text(&PhonemeSequence::new(vec![1, 2, 3, 4]).unwrap())
        .unwrap();
    let b = tts
        .encode_text(&PhonemeSequence::new(vec![1, 2, 3, 4]).unwrap())
        .unwrap();
    let c = tts
        .encode_text(&PhonemeSequence::new(vec![1, 2, 9, 4]).unwrap())
        .unwrap();
    assert_eq!(a.to_rows().unwrap(), b.to_rows().unwrap());
    assert_ne!(a.to_rows().unwrap(), c.to_rows().unwrap());
}

#[test]
fn out_of_vocabulary_phoneme_rejected() {
    let tts = model();
    let err = tts
        .encode_text(&PhonemeSequence::new(vec![1, 16]).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "{err}");
}

#[test]
fn timbre_pooling_is_the_frame_mean() {
    let frames = Tensor::new(&[[1f32, 3.0], [3.0, 5.0]], &Device::Cpu).unwrap();
    assert_eq!(pool_timbre(&frames).unwrap().to_vec1::<f32>().unwrap(), vec![2.0, 4.0]);

    let v = Tensor::new(&[[0.5f32, -1.5, 2.0]], &Device::Cpu).unwrap();
    let constant = v.repeat((7, 1)).unwrap();
    let pooled = pool_timbre(&constant).unwrap().to_vec1::<f32>().unwrap();
    for (a, b) in pooled.iter().zip([0.5f32, -1.5, 2.0]) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn timbre_pooling_ignores_frame_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f32>> = (0..9)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut shuffled = rows.clone();
    shuffled.reverse();
    shuffled.swap(0, 4);
    let pool = |r: &[Vec<f32>]| {
        let t = Tensor::new(r.to_vec(), &Device::Cpu).unwrap();
        pool_timbre(&t).unwrap().to_vec1::<f32>().unwrap()
    };
    for (a, b) in pool(&rows).iter().zip(pool(&shuffled)) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn timbre_vector_has_configured_width() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert_eq!(tts.encode_timbre(&random_mel(&mut rng, 12)).unwrap().dim(), 8);
}

#[test]
fn quantize_fixed_point_and_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cb = Codebook::random(8, 4, &mut rng).unwrap();
    let e3 = cb.entry(3).to_vec();
    let (i, q) = cb.quantize(&e3).unwrap();
    assert_eq!((i, q), (3, e3.as_slice()));

    // v = 0 is equidistant from entries 0 and 4 (both at distance 1).
    let mut entries = vec![5f32; 5 * 2];
    entries[0..2].copy_from_slice(&[1.0, 0.0]);
    entries[8..10].copy_from_slice(&[0.0, -1.0]);
    let cb = Codebook::new(entries, 2).unwrap();
    assert_eq!(cb.quantize(&[0.0, 0.0]).unwrap().0, 0);
}

#[test]
fn quantize_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let cb = Codebook::random(16, 8, &mut rng).unwrap();
        let v: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = |e: &[f32]| e.iter().zip(&v).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>();
        let best = (0..16)
            .min_by(|&a, &b| dist(cb.entry(a)).total_cmp(&dist(cb.entry(b))))
            .unwrap();
        assert_eq!(cb.quantize(&v).unwrap().0, best);
    }
}

#[test]
fn prosody_is_one_code_per_phoneme() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bands = slice_prosody_bands(&random_mel(&mut rng, 5)).unwrap();
    let align = FrameToPhonemeMap::from_durations(&[2, 3]).unwrap();
    let (codes, z) = tts.encode_prosody(&bands, &align).unwrap();
    assert_eq!(codes.len(), 2);
    assert_eq!(z.dims(), &[2, 8]);
}

#[test]
fn identical_frames_give_identical_codes() {
    let tts = model();
    let bands = slice_prosody_bands(&constant_mel(5, -3.0)).unwrap();
    let align = FrameToPhonemeMap::from_durations(&[2, 3]).unwrap();
    let (codes, z) = tts.encode_prosody(&bands, &align).unwrap();
    let rows = to_vec2(&z).unwrap();
    for (a, b) in rows[0].iter().zip(&rows[1]) {
        assert!((a - b).abs() < 1e-5);
    }
    assert_eq!(codes.codes()[0], codes.codes()[1]);
}

#[test]
fn prosody_vectors_are_span_means_and_codes_are_nearest_entries() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let durations = [3usize, 1, 4, 2];
    let t: usize = durations.iter().sum();
    let bands = slice_prosody_bands(&random_mel(&mut rng, t)).unwrap();
    // With one frame per phoneme the encoder's frame outputs come back as is.
    let frames = to_vec2(
        &tts.prosody_pre_quant(&bands, &FrameToPhonemeMap::from_durations(&vec![1; t]).unwrap())
            .unwrap(),
    )
    .unwrap();
    let align = FrameToPhonemeMap::from_durations(&durations).unwrap();
    let (codes, z) = tts.encode_prosody(&bands, &align).unwrap();
    let z = to_vec2(&z).unwrap();
    let mut start = 0;
    for (p, &d) in durations.iter().enumerate() {
        for k in 0..8 {
            let mean = (start..start + d).map(|f| frames[f][k]).sum::<f64>() / d as f64;
            assert!((mean - z[p][k]).abs() < 1e-5, "phoneme {p} dim {k}");
        }
        start += d;
        let zp: Vec<f32> = z[p].iter().map(|&x| x as f32).collect();
        let dist = |e: &[f32]| e.iter().zip(&zp).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>();
        let mut best = 0;
        for i in 1..tts.codebook.size() {
            if dist(tts.codebook.entry(i)) < dist(tts.codebook.entry(best)) {
                best = i;
            }
        }
        assert_eq!(codes.codes()[p] as usize, best);
    }
}

#[test]
fn mismatched_alignment_rejected() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let bands = slice_prosody_bands(&random_mel(&mut rng, 6)).unwrap();
    let align = FrameToPhonemeMap::from_durations(&[2, 3]).unwrap();
    assert!(matches!(
        tts.encode_prosody(&bands, &align),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn decoded_length_is_the_duration_sum() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ph = PhonemeSequence::new(vec![3, 4]).unwrap();
    let align = FrameToPhonemeMap::from_durations(&[2, 3]).unwrap();
    let bands = slice_prosody_bands(&random_mel(&mut rng, 5)).unwrap();
    let (codes, _) = tts.encode_prosody(&bands, &align).unwrap();
    let content = tts.encode_text(&ph).unwrap();
    let timbre = tts.encode_timbre(&random_mel(&mut rng, 9)).unwrap();
    let a = tts.decode_mel(&content, &timbre, &codes, &align, 200, 16_000).unwrap();
    let b = tts.decode_mel(&content, &timbre, &codes, &align, 200, 16_000).unwrap();
    assert_eq!(a.n_frames(), 5);
    assert_eq!(a, b);

    let other = TimbreVector::from_values(&[1.0, -1.0, 0.5, 0.0, 2.0, -0.5, 0.3, 0.9]).unwrap();
    let c = tts.decode_mel(&content, &other, &codes, &align, 200, 16_000).unwrap();
    assert_ne!(a, c);
}

#[test]
fn decoder_rejects_length_mismatch() {
    let tts = model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let content = tts.encode_text(&PhonemeSequence::new(vec![3, 4, 5]).unwrap()).unwrap();
    let align = FrameToPhonemeMap::from_durations(&[2, 3]).unwrap();
    let bands = slice_prosody_bands(&random_mel(&mut rng, 5)).unwrap();
    let (codes, _) = tts.encode_prosody(&bands, &align).unwrap();
    let timbre = tts.encode_timbre(&random_mel(&mut rng, 4)).unwrap();
    assert!(tts.decode_mel(&content, &timbre, &codes, &align, 200, 16_000).is_err());
}

#[test]
fn lsgan_closed_form() {
    assert_eq!(lsgan_losses(&[1.0], &[0.0]).unwrap().0, 0.0);
    assert_eq!(lsgan_losses(&[0.3], &[1.0]).unwrap().1, 0.0);
    let (d, g) = lsgan_losses(&[0.5], &[0.5]).unwrap();
    assert!((d - 0.25).abs() < 1e-12 && (g - 0.25).abs() < 1e-12);
}

#[test]
fn stage1_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let y = random_mel(&mut rng, 6);
    assert_eq!(stage1_loss(&y, &y, 0.0, 0.0, 0.25, 0.0).unwrap().total, 0.0);
    let shifted: Vec<f32> = y.values().iter().map(|v| v + 1.0).collect();
    let y1 = MelSpectrogram::new(shifted, 6, 80, 200, 16_000).unwrap();
    let r = stage1_loss(&y, &y1, 0.0, 0.0, 0.25, 0.0).unwrap();
    assert!((r.recon_l2 - 1.0).abs() < 1e-6);
    assert!(stage1_loss(&y, &random_mel(&mut rng, 5), 0.0, 0.0, 0.25, 0.0).is_err());
}

fn toy_examples() -> (FeatureConfig, Vec<TtsExample>) {
    let f = FeatureConfig::default();
    let toy = ToyCorpusConfig {
        utterances_per_speaker: 2,
        ..Default::default()
    };
    let items = generate_toy_utterances(&toy, &f)
        .unwrap()
        .into_iter()
        .map(|u| {
            let mel = compute_mel(&u.wave, &f).unwrap();
            let align = FrameToPhonemeMap::from_durations(&u.durations).unwrap();
            (
                format!("spk{}", u.speaker),
                PhonemeSequence::new(u.phonemes).unwrap(),
                mel,
                align,
            )
        })
        .collect();
    (f, prepare_examples(items).unwrap())
}

fn small_train_config(max_steps: usize) -> TtsConfig {
    let mut cfg = TtsConfig {
        model: small(),
        ..Default::default()
    };
    cfg.train.max_steps = max_steps;
    cfg.train.batch_size = 2;
    cfg.train.adv_warmup_steps = 2;
    cfg.train.codebook_size = 8;
    cfg.train.reset_patience = 2;
    cfg.train.seed = 42;
    cfg
}

fn assert_same_tensors(a: &Checkpoint, b: &Checkpoint) {
    let mut names: Vec<_> = a.tensors.keys().collect();
    names.sort();
    let mut other: Vec<_> = b.tensors.keys().collect();
    other.sort();
    assert_eq!(names, other);
    for name in names {
        let x = a.tensors[name]
            .flatten_all()
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        let y = b.tensors[name]
            .flatten_all()
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        assert!(
            x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()),
            "tensor {name} differs"
        );
    }
}

#[test]
fn zero_steps_leave_the_initialization() {
    let (f, examples) = toy_examples();
    let cfg = small_train_config(0);
    let mut trained = Stage1Trainer::new(&cfg, &f, DType::F32).unwrap();
    trained.train(&examples, |_, _, _| Ok(())).unwrap();
    let fresh = Stage1Trainer::new(&cfg, &f, DType::F32).unwrap();
    assert_eq!(trained.step(), 0);
    assert_same_tensors(&trained.checkpoint().unwrap(), &fresh.checkpoint().unwrap());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (f, examples) = toy_examples();
    let (s, k) = (3, 3);
    let mut straight = Stage1Trainer::new(&small_train_config(s + k), &f, DType::F32).unwrap();
    straight.train(&examples, |_, _, _| Ok(())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tts.ckpt");
    let mut first = Stage1Trainer::new(&small_train_config(s), &f, DType::F32).unwrap();
    first.train(&examples, |_, _, _| Ok(())).unwrap();
    first.save(&path).unwrap();
    let mut resumed = Stage1Trainer::resume(&Checkpoint::load(&path).unwrap(), DType::F32).unwrap();
    assert_eq!(resumed.step(), s);
    resumed.set_max_steps(s + k);
    resumed.train(&examples, |_, _, _| Ok(())).unwrap();

    assert_eq!(resumed.step(), s + k);
    assert_same_tensors(&straight.checkpoint().unwrap(), &resumed.checkpoint().unwrap());
}
