//! `avatar`: train the three models, synthesize talking-head videos, and
//! evaluate checkpoints.
//!
//! Output videos are AVI files with an uncompressed 24-bit RGB video stream
//! and a 16-bit PCM mono audio stream.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avatar_core::config::PipelineConfig;
use avatar_core::pipeline::{
    default_output, eval_corpus, probe_corpus, synthesize, train_motion, train_pllm, train_tts, uniform_durations,
    write_toy_corpus, SynthesisRequest, ToyCorpusConfig,
};
use avatar_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avatar", version, about = "Text + reference audio to a talking-avatar video")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config (training, sampling, vocoder).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (checkpoint or video) or directory (toy-corpus).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint to resume from (train-tts) or to evaluate (eval, probe).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Abort on the first bad corpus item instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Load checkpoints whose feature config hash does not match.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Stage-1 TTS training (reconstruction, VQ and adversarial losses).
    TrainTts {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Prosody code language model training on a frozen TTS.
    TrainPllm {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        tts: PathBuf,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Audio-to-landmark VAE and identity postnet for one speaker.
    TrainMotion {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        speaker: String,
    },
    /// Synthesize a video from phoneme IDs and a reference utterance.
    Synth(SynthArgs),
    /// Codebook perplexity and timbre similarity over a corpus.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Linear probes of speaker identity on timbre vs prosody representations.
    Probe {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a small synthetic multi-speaker corpus with landmarks.
    ToyCorpus {
        #[arg(long, default_value_t = 2)]
        speakers: usize,
        #[arg(long, default_value_t = 8)]
        utterances: usize,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Target phoneme IDs, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    phonemes: Vec<u32>,
    /// Frames per target phoneme, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "uniform_dur")]
    durations: Vec<usize>,
    /// Give every target phoneme N frames.
    #[arg(long)]
    uniform_dur: Option<usize>,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ref_phonemes: Vec<u32>,
    #[arg(long, value_delimiter = ',', required = true)]
    ref_durations: Vec<usize>,
    #[arg(long)]
    tts: PathBuf,
    #[arg(long)]
    pllm: PathBuf,
    /// Identity motion checkpoint (defaults to --checkpoint).
    #[arg(long)]
    identity: Option<PathBuf>,
    /// Also write every video frame as a numbered PNG into this directory.
    #[arg(long)]
    dump_frames: Option<PathBuf>,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.tts.train.seed = seed;
        cfg.pllm.train.seed = seed;
        cfg.motion.train.seed = seed;
        cfg.sampling.seed = seed;
    }
    cfg.tts.train.strict |= common.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("{flag} is required")))
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut cfg = load_config(c)?;
    match cli.command {
        Command::TrainTts { manifest, max_steps } => {
            if let Some(n) = max_steps {
                cfg.tts.train.max_steps = n;
            }
            let out = required(&c.out, "--out")?;
            let r = train_tts(&manifest, &cfg, out, c.checkpoint.as_deref(), c.force)?;
            print_json(&r);
        }
        Command::TrainPllm {
            manifest,
            tts,
            max_steps,
        } => {
            if let Some(n) = max_steps {
                cfg.pllm.train.max_steps = n;
            }
            let loss = train_pllm(&manifest, &tts, &cfg, required(&c.out, "--out")?, c.force)?;
            print_json(&serde_json::json!({ "cross_entropy": loss }));
        }
        Command::TrainMotion { manifest, speaker } => {
            let r = train_motion(&manifest, &speaker, &cfg, required(&c.out, "--out")?)?;
            print_json(&r);
        }
        Command::Synth(a) => {
            let durations = match a.uniform_dur {
                Some(n) => uniform_durations(a.phonemes.len(), n),
                None if a.durations.is_empty() => {
                    return Err(Error::invalid("give --durations or --uniform-dur"));
                }
                None => a.durations,
            };
            let identity = match (a.identity, &c.checkpoint) {
                (Some(p), _) => p,
                (None, Some(p)) => p.clone(),
                (None, None) => return Err(Error::invalid("--identity (or --checkpoint) is required")),
            };
            let output_path = match &c.out {
                Some(p) if p.is_dir() => default_output(p),
                Some(p) => p.clone(),
                None => default_output(Path::new(".")),
            };
            let req = SynthesisRequest {
                phoneme_ids: a.phonemes,
                durations,
                reference_audio: a.reference,
                reference_phoneme_ids: a.ref_phonemes,
                reference_durations: a.ref_durations,
                tts_checkpoint: a.tts,
                pllm_checkpoint: a.pllm,
                identity_checkpoint: identity,
                output_path,
                seed: cfg.sampling.seed,
                dump_frames: a.dump_frames,
                force: c.force,
            };
            print_json(&synthesize(&req, &cfg)?);
        }
        Command::Eval { manifest } => {
            print_json(&eval_corpus(
                &manifest,
                required(&c.checkpoint, "--checkpoint")?,
                &cfg,
                c.force,
            )?);
        }
        Command::Probe { manifest } => {
            let seed = c.seed.unwrap_or(0);
            print_json(&probe_corpus(
                &manifest,
                required(&c.checkpoint, "--checkpoint")?,
                &cfg,
                seed,
                c.force,
            )?);
        }
        Command::ToyCorpus { speakers, utterances } => {
            let toy = ToyCorpusConfig {
                speakers,
                utterances_per_speaker: utterances,
                seed: c.seed.unwrap_or(ToyCorpusConfig::default().seed),
                ..Default::default()
            };
            let manifest = write_toy_corpus(required(&c.out, "--out")?, &toy, &cfg.features)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
