use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tts::{TtsExample, TtsModel};

const PROBE_EPOCHS: usize = 500;
const PROBE_LR: f64 = 0.5;
const PROBE_L2: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub timbre_accuracy: f64,
    pub prosody_accuracy: f64,
    /// `timbre_accuracy - prosody_accuracy`.
    pub gap: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_speakers: usize,
}

/// Multinomial logistic regression trained by full-batch gradient descent on
/// standardized features; returns test accuracy.
pub fn linear_probe_accuracy(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    n_classes: usize,
) -> Result<f64> {
    if train_x.is_empty() || test_x.is_empty() || n_classes < 2 {
        return Err(Error::invalid("probe needs train and test data and two classes"));
    }
    let d = train_x[0].len();
    if train_x.iter().chain(test_x).any(|x| x.len() != d) {
        return Err(Error::invalid("probe features differ in dimension"));
    }
    let n = train_x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| train_x.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = train_x.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 1e-12 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let norm = |x: &Vec<f64>| -> Vec<f64> { x.iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]).collect() };
    let xs: Vec<Vec<f64>> = train_x.iter().map(norm).collect();
    let mut w = vec![vec![0.0; d + 1]; n_classes];
    let scores = |w: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        w.iter()
            .map(|wc| wc[d] + wc[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    for _ in 0..PROBE_EPOCHS {
        let mut grad = vec![vec![0.0; d + 1]; n_classes];
        for (x, &y) in xs.iter().zip(train_y) {
            let s = scores(&w, x);
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..n_classes {
                let g = e[c] / z - if c == y { 1.0 } else { 0.0 };
                for j in 0..d {
                    grad[c][j] += g * x[j];
                }
                grad[c][d] += g;
            }
        }
        for c in 0..n_classes {
            for j in 0..=d {
                let reg = if j < d { PROBE_L2 * w[c][j] } else { 0.0 };
                w[c][j] -= PROBE_LR * (grad[c][j] / n + reg);
            }
        }
    }
    let correct = test_x
        .iter()
        .zip(test_y)
        .filter(|(x, &y)| crate::pllm::argmax(&scores(&w, &norm(x))) == y)
        .count();
    Ok(correct as f64 / test_x.len() as f64)
}

/// Speaker-identification probes on timbre vectors and on phoneme-averaged
/// one-hot prosody codes. Each speaker's utterances are shuffled with `seed`
/// and split in half between train and test.
pub fn disentanglement_probe(examples: &[TtsExample], tts: &TtsModel, seed: u64) -> Result<ProbeReport> {
    let mut speakers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        speakers.entry(ex.speaker.as_str()).or_default().push(i);
    }
    if speakers.len() < 2 {
        return Err(Error::invalid("disentanglement probe needs at least two speakers"));
    }
    if speakers.values().any(|v| v.len() < 2) {
        return Err(Error::invalid("every speaker needs at least two utterances"));
    }
    let k = tts.codebook.size();
    let mut timbre = Vec::with_capacity(examples.len());
    let mut prosody = Vec::with_capacity(examples.len());
    for ex in examples {
        timbre.push(tts.encode_timbre(&ex.mel)?.values()?);
        let (codes, _) = tts.encode_prosody(&ex.bands, &ex.align)?;
        let mut h = vec![0.0; k];
        for &c in codes.codes() {
            h[c as usize] += 1.0 / codes.len() as f64;
        }
        prosody.push(h);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (label, idx) in speakers.values().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        train.extend(idx[..half].iter().map(|&i| (i, label)));
        test.extend(idx[half..].iter().map(|&i| (i, label)));
    }
    let run = |feats: &[Vec<f64>]| {
        let pick = |set: &[(usize, usize)]| -> (Vec<Vec<f64>>, Vec<usize>) {
            set.iter().map(|&(i, y)| (feats[i].clone(), y)).unzip()
        };
        let (tx, ty) = pick(&train);
        let (ex, ey) = pick(&test);
        linear_probe_accuracy(&tx, &ty, &ex, &ey, speakers.len())
    };
    let timbre_accuracy = run(&timbre)?;
    let prosody_accuracy = run(&prosody)?;
    Ok(ProbeReport {
        timbre_accuracy,
        prosody_accuracy,
        gap: timbre_accuracy - prosody_accuracy,
        n_train: train.len(),
        n_test: test.len(),
        n_speakers: speakers.len(),
    })
}
