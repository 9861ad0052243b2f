use avatar_core::audio::Waveform;
use avatar_core::config::CanvasConfig;
use avatar_core::motion::{LandmarkSequence, Normalization, FRAME_DIM, NUM_LANDMARKS};
use avatar_core::render::{
    compose_video, rasterize_landmarks, render_landmarks, resample_indices, to_pixel, ImageFrame, BACKGROUND,
    CENTER_COLOR,
};
use avatar_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 68 points on a 9 x 8 grid, far enough apart that no two discs touch.
fn grid_frame() -> Vec<f32> {
    let mut v = Vec::with_capacity(FRAME_DIM);
    for i in 0..NUM_LANDMARKS {
        let (c, r) = ((i % 9) as f32, (i / 9) as f32);
        v.extend_from_slice(&[-0.9 + 0.225 * c, 0.9 - 0.25 * r, 0.0]);
    }
    v
}

fn blank(n: usize) -> Vec<ImageFrame> {
    vec![ImageFrame::filled(64, 64, BACKGROUND); n]
}

fn canvas() -> CanvasConfig {
    CanvasConfig {
        width: 64,
        height: 64,
        ..Default::default()
    }
}

fn silence(seconds: f64) -> Waveform {
    Waveform::new(vec![0.0; (seconds * 16_000.0).round() as usize], 16_000)
}

#[test]
fn origin_maps_to_the_canvas_center() {
    let cfg = CanvasConfig::default();
    let (x, y) = to_pixel(0.0, 0.0, &cfg);
    assert!((x - cfg.width as i64 / 2).abs() <= 1 && (y - cfg.height as i64 / 2).abs() <= 1);
}

#[test]
fn rasterization_is_deterministic() {
    let cfg = CanvasConfig::default();
    let f = grid_frame();
    let (a, _) = rasterize_landmarks(&f, &cfg).unwrap();
    let (b, _) = rasterize_landmarks(&f, &cfg).unwrap();
    assert_eq!(a.pixels, b.pixels);
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn pixel_scan_recovers_every_center() {
    let cfg = CanvasConfig::default();
    let f = grid_frame();
    let (img, clamped) = rasterize_landmarks(&f, &cfg).unwrap();
    assert_eq!(clamped, 0);
    let mut found = Vec::new();
    for y in 0..img.height {
        for x in 0..img.width {
            if img.pixel(x, y) == CENTER_COLOR {
                found.push((x as i64, y as i64));
            }
        }
    }
    let mut expected: Vec<(i64, i64)> = f.chunks_exact(3).map(|p| to_pixel(p[0], p[1], &cfg)).collect();
    expected.sort_by_key(|&(x, y)| (y, x));
    assert_eq!(found.len(), NUM_LANDMARKS);
    assert_eq!(found, expected);
}

#[test]
fn out_of_box_coordinates_are_clamped_and_counted() {
    let mut f = grid_frame();
    f[0] = 3.0;
    f[4] = -2.0;
    let (_, clamped) = rasterize_landmarks(&f, &CanvasConfig::default()).unwrap();
    assert_eq!(clamped, 2);
    assert!(rasterize_landmarks(&f[..9], &CanvasConfig::default()).is_err());
}

#[test]
fn matching_durations_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CanvasConfig { fps: 25, ..canvas() };
    let out = dir.path().join("a.avi");
    compose_video(&blank(25), &silence(1.0), &cfg, &out).unwrap();
    assert!(out.metadata().unwrap().len() > 25 * 64 * 64 * 3);
}

#[test]
fn zero_frames_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = compose_video(&[], &silence(1.0), &canvas(), &dir.path().join("a.avi")).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "{err}");
}

#[test]
fn duration_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = compose_video(&blank(25), &silence(2.0), &canvas(), &dir.path().join("a.avi")).unwrap_err();
    assert!(matches!(err, Error::DurationMismatch { .. }), "{err}");
}

#[test]
fn unwritable_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("a.avi");
    let err = compose_video(&blank(25), &silence(1.0), &canvas(), &out).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

struct Probe {
    video_secs: f64,
    audio_secs: f64,
    frames: u32,
}

fn le32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Reads the stream headers of an AVI: rate/scale and length per stream.
fn probe(bytes: &[u8]) -> Probe {
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"AVI ");
    assert_eq!(le32(bytes, 4) as usize + 8, bytes.len());
    let mut video = None;
    let mut audio = None;
    let mut i = 12;
    while i + 8 <= bytes.len() {
        let id = &bytes[i..i + 4];
        let size = le32(bytes, i + 4) as usize;
        if id == b"LIST" {
            // Descend into lists.
            i += 12;
            continue;
        }
        if id == b"strh" {
            let h = &bytes[i + 8..i + 8 + size];
            let (scale, rate, length) = (le32(h, 20) as f64, le32(h, 24) as f64, le32(h, 32) as f64);
            let secs = length * scale / rate;
            match &h[0..4] {
                b"vids" => video = Some((secs, length as u32)),
                b"auds" => audio = Some(secs),
                other => panic!("unexpected stream type {other:?}"),
            }
        }
        i += 8 + size + (size & 1);
    }
    let (video_secs, frames) = video.expect("video stream");
    Probe {
        video_secs,
        audio_secs: audio.expect("audio stream"),
        frames,
    }
}

#[test]
fn written_container_reports_matching_durations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clip.avi");
    let cfg = CanvasConfig { fps: 25, ..canvas() };
    compose_video(&blank(77), &silence(3.08), &cfg, &out).unwrap();
    let p = probe(&std::fs::read(&out).unwrap());
    assert_eq!(p.frames, 77);
    assert!((p.video_secs - 3.08).abs() < 1e-9, "video {}", p.video_secs);
    assert!((p.audio_secs - 3.08).abs() < 1e-9, "audio {}", p.audio_secs);
    assert!((p.video_secs - p.audio_secs).abs() <= 1.0 / 25.0);
}

#[test]
fn frame_count_follows_duration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let secs = rng.random_range(0.05..6.0);
        let src_fps = rng.random_range(20.0..120.0);
        let fps = rng.random_range(10..61) as f64;
        let n_src = ((secs * src_fps) as usize).max(1);
        let idx = resample_indices(n_src, src_fps, fps, secs);
        let expected = (secs * fps).round() as i64;
        assert!(
            (idx.len() as i64 - expected).abs() <= 1,
            "{} frames for {secs}s at {fps}",
            idx.len()
        );
        assert!(idx.iter().all(|&i| i < n_src));
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn rendered_frames_cover_the_audio() {
    let pts = grid_frame().repeat(80);
    let lms = LandmarkSequence::new(pts, 80.0, Normalization::default()).unwrap();
    let (frames, clamped) = render_landmarks(&lms, &canvas(), 1.0).unwrap();
    assert_eq!(frames.len(), 25);
    assert_eq!(clamped, 0);
    assert!(frames.windows(2).all(|w| w[0].pixels == w[1].pixels));
}
