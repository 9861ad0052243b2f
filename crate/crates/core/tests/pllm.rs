use avatar_core::config::{PllmConfig, PllmModelConfig, SamplingConfig};
use avatar_core::nn::{scalar, to_vec2};
use avatar_core::pllm::{argmax, cross_entropy, PllmExample, PllmInput, PllmModel, PllmTrainer};
use avatar_core::tts::{ContentRepr, ProsodyCodeSequence};
use avatar_core::Error;
use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 16;
const D: usize = 8;

fn small() -> PllmModelConfig {
    PllmModelConfig {
        n_layers: 2,
        n_heads: 2,
        width: 16,
        max_positions: 64,
    }
}

fn content(rng: &mut ChaCha8Rng, n: usize) -> ContentRepr {
    let v: Vec<f32> = (0..n * D).map(|_| rng.random_range(-1.0..1.0)).collect();
    ContentRepr(Tensor::from_vec(v, (n, D), &Device::Cpu).unwrap())
}

fn codes(v: Vec<u32>) -> ProsodyCodeSequence {
    ProsodyCodeSequence::new(v, K).unwrap()
}

fn input(rng: &mut ChaCha8Rng, prompt: Vec<u32>, target_len: usize) -> PllmInput {
    let n = prompt.len();
    PllmInput::new(codes(prompt), content(rng, n), content(rng, target_len)).unwrap()
}

fn greedy() -> SamplingConfig {
    SamplingConfig {
        temperature: 0.0,
        top_k: 0,
        seed: 0,
    }
}

#[test]
fn empty_prefix_gives_one_row() {
    let model = PllmModel::new(&small(), K, D, 1, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inp = input(&mut rng, vec![1, 2, 3], 4);
    let logits = model.forward(&inp, &codes(vec![])).unwrap();
    assert_eq!(logits.rows(), 1);
    assert_eq!(model.forward(&inp, &codes(vec![4, 5])).unwrap().rows(), 3);
}

#[test]
fn out_of_range_codes_rejected() {
    let model = PllmModel::new(&small(), K, D, 1, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inp = input(&mut rng, vec![1, 2], 3);
    let err = model.logits_tensor(&inp, &[K as u32]).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    assert!(model.logits_tensor(&inp, &[1, 2, 3, 4]).is_err());
}

#[test]
fn prompt_codes_change_first_logits() {
    let model = PllmModel::new(&small(), K, D, 3, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pc = content(&mut rng, 3);
    let tc = content(&mut rng, 4);
    let a = PllmInput::new(codes(vec![1, 2, 3]), pc.clone(), tc.clone()).unwrap();
    let b = PllmInput::new(codes(vec![1, 9, 3]), pc, tc).unwrap();
    let la = model.forward(&a, &codes(vec![])).unwrap().to_rows().unwrap();
    let lb = model.forward(&b, &codes(vec![])).unwrap().to_rows().unwrap();
    assert_ne!(la[0], lb[0]);
}

#[test]
fn cross_entropy_matches_log_sum_exp() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(1..6);
        let k = rng.random_range(2..20);
        let v: Vec<f64> = (0..n * k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let t: Vec<u32> = (0..n).map(|_| rng.random_range(0..k as u32)).collect();
        let mut expected = 0.0;
        for i in 0..n {
            let row = &v[i * k..(i + 1) * k];
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            expected += lse - row[t[i] as usize];
        }
        expected /= n as f64;
        let logits = Tensor::from_vec(v, (n, k), &Device::Cpu).unwrap();
        let got = scalar(&cross_entropy(&logits, &t).unwrap()).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }
}

#[test]
fn single_step_greedy_is_the_argmax() {
    let model = PllmModel::new(&small(), K, D, 5, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inp = input(&mut rng, vec![3, 4], 3);
    let row = &model.forward(&inp, &codes(vec![])).unwrap().to_rows().unwrap()[0];
    let out = model.predict(&inp, 1, &greedy(), 0).unwrap();
    assert_eq!(out.codes(), &[argmax(row) as u32]);
}

#[test]
fn zero_temperature_equals_top_one() {
    let model = PllmModel::new(&small(), K, D, 6, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inp = input(&mut rng, vec![3, 4, 5], 6);
    let top1 = SamplingConfig {
        temperature: 1.3,
        top_k: 1,
        seed: 0,
    };
    assert_eq!(
        model.predict(&inp, 6, &greedy(), 1).unwrap(),
        model.predict(&inp, 6, &top1, 99).unwrap()
    );
}

#[test]
fn sampling_is_seeded() {
    let model = PllmModel::new(&small(), K, D, 7, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inp = input(&mut rng, vec![3, 4, 5], 6);
    let s = SamplingConfig::default();
    let a = model.predict(&inp, 6, &s, 11).unwrap();
    assert_eq!(a, model.predict(&inp, 6, &s, 11).unwrap());
    assert_eq!(a.len(), 6);
    assert!(a.codes().iter().all(|&c| (c as usize) < K));
}

#[test]
fn greedy_output_is_teacher_forcing_consistent() {
    let model = PllmModel::new(&small(), K, D, 8, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inp = input(&mut rng, vec![0, 7, 2], 7);
    let out = model.predict(&inp, 7, &greedy(), 0).unwrap();
    let rows = model
        .forward(&inp, &codes(out.codes()[..6].to_vec()))
        .unwrap()
        .to_rows()
        .unwrap();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(argmax(row) as u32, out.codes()[i], "position {i}");
    }
}

#[test]
fn empty_batch_rejected() {
    let model = PllmModel::new(&small(), K, D, 9, DType::F32).unwrap();
    assert!(matches!(
        PllmTrainer::batch_loss(&model, &[]),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn zero_target_length_rejected() {
    let model = PllmModel::new(&small(), K, D, 9, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inp = input(&mut rng, vec![1], 2);
    assert!(model.predict(&inp, 0, &greedy(), 0).is_err());
}

fn speaker_sequence(rng: &mut ChaCha8Rng, speaker: usize, n: usize) -> Vec<u32> {
    let base = (speaker * K / 2) as u32;
    (0..n).map(|_| base + rng.random_range(0..(K / 2) as u32)).collect()
}

fn histogram(codes: &[u32]) -> Vec<f64> {
    let mut h = [0.0; K];
    for &c in codes {
        h[c as usize] += 1.0;
    }
    let n = codes.len() as f64;
    h.iter().map(|v| v / n).collect()
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[test]
fn generated_codes_follow_the_prompt_speaker() {
    // Two speakers with disjoint halves of the codebook; the content carries
    // no speaker information, so only the prompt can tell them apart.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut examples = Vec::new();
    let mut per_speaker = [Vec::new(), Vec::new()];
    for i in 0..40 {
        let spk = i % 2;
        let prompt = speaker_sequence(&mut rng, spk, 5);
        let target = speaker_sequence(&mut rng, spk, 5);
        per_speaker[spk].extend_from_slice(&target);
        examples.push(PllmExample {
            input: input(&mut rng, prompt, 5),
            target,
        });
    }
    let mut cfg = PllmConfig {
        model: PllmModelConfig { width: 32, ..small() },
        ..Default::default()
    };
    cfg.train.max_steps = 150;
    cfg.train.batch_size = 8;
    cfg.train.lr = 3e-3;
    cfg.train.seed = 10;
    let mut trainer = PllmTrainer::new(&cfg, K, D, "test", DType::F32).unwrap();
    trainer.train(&examples, |_, _| Ok(())).unwrap();

    let reference = [histogram(&per_speaker[0]), histogram(&per_speaker[1])];
    let sampling = SamplingConfig::default();
    for spk in 0..2 {
        let mut generated = Vec::new();
        for j in 0..20 {
            let prompt = speaker_sequence(&mut rng, spk, 5);
            let inp = input(&mut rng, prompt, 5);
            generated.extend_from_slice(trainer.model.predict(&inp, 5, &sampling, j).unwrap().codes());
        }
        let h = histogram(&generated);
        let own = total_variation(&h, &reference[spk]);
        let other = total_variation(&h, &reference[1 - spk]);
        assert!(own < other, "speaker {spk}: TV to own {own:.3}, to other {other:.3}");
    }
}

#[test]
fn logits_have_codebook_width() {
    let model = PllmModel::new(&small(), K, D, 12, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inp = input(&mut rng, vec![], 3);
    let l = model.logits_tensor(&inp, &[1, 2]).unwrap();
    assert_eq!(
        to_vec2(&l).unwrap().iter().map(Vec::len).collect::<Vec<_>>(),
        vec![K; 3]
    );
}
