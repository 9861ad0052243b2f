use std::path::Path;
use std::process::{Command, Output};

fn avatar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avatar"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn toy_corpus(dir: &Path) -> String {
    let out = avatar(&["--out", dir.to_str().unwrap(), "toy-corpus", "--utterances", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .trim_matches('"')
        .to_string()
}

#[test]
fn missing_manifest_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = avatar(&[
        "--out",
        dir.path().join("tts.ckpt").to_str().unwrap(),
        "train-tts",
        "--manifest",
        dir.path().join("nope.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(&dir.path().join("corpus"));
    for (name, text) in [
        ("unknown.toml", "[tts.train]\nno_such_key = 1\n"),
        ("invalid.toml", "[canvas]\nfps = 0\n"),
        ("syntax.toml", "[tts\n"),
    ] {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, text).unwrap();
        let out = avatar(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("tts.ckpt").to_str().unwrap(),
            "train-tts",
            "--manifest",
            &manifest,
        ]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn divergent_training_exits_with_divergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(&dir.path().join("corpus"));
    let cfg = dir.path().join("huge-lr.toml");
    std::fs::write(&cfg, "[tts.train]\nlr = 1e30\nbatch_size = 1\n").unwrap();
    let out = avatar(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("tts.ckpt").to_str().unwrap(),
        "train-tts",
        "--manifest",
        &manifest,
        "--max-steps",
        "5",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(3), "{stderr}");
    assert!(stderr.contains("diverged"), "{stderr}");
}

#[test]
fn synth_with_missing_checkpoint_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(&dir.path().join("corpus"));
    let wav = Path::new(&manifest).parent().unwrap().join("spk0_utt000.wav");
    let missing = dir.path().join("missing.ckpt");
    let out = avatar(&[
        "--out",
        dir.path().join("a.avi").to_str().unwrap(),
        "synth",
        "--phonemes",
        "1,2",
        "--uniform-dur",
        "3",
        "--reference",
        wav.to_str().unwrap(),
        "--ref-phonemes",
        "1",
        "--ref-durations",
        "4",
        "--tts",
        missing.to_str().unwrap(),
        "--pllm",
        missing.to_str().unwrap(),
        "--identity",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("a.avi").exists());
}

#[test]
fn probe_on_single_speaker_corpus_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = avatar(&[
        "--out",
        corpus.to_str().unwrap(),
        "toy-corpus",
        "--speakers",
        "1",
        "--utterances",
        "4",
    ]);
    assert!(out.status.success());
    let manifest = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .trim_matches('"')
        .to_string();
    let ckpt = dir.path().join("tts.ckpt");
    let cfg = dir.path().join("zero.toml");
    std::fs::write(&cfg, "[tts.train]\nmax_steps = 0\n").unwrap();
    let out = avatar(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "train-tts",
        "--manifest",
        &manifest,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = avatar(&["--checkpoint", ckpt.to_str().unwrap(), "probe", "--manifest", &manifest]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
