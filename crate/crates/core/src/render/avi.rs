//! Minimal AVI (RIFF) writer: one uncompressed 24-bit top-down DIB video stream and
//! one 16-bit mono PCM audio stream, interleaved per video frame, with an
//! `idx1` index.

use std::io::Write;
use std::path::Path;

use super::raster::ImageFrame;
use crate::audio::{pcm16, Waveform};
use crate::error::{Error, Result};

const AVIF_HASINDEX: u32 = 0x10;
const AVIF_ISINTERLEAVED: u32 = 0x100;
const AVIIF_KEYFRAME: u32 = 0x10;

struct Buf(Vec<u8>);

impl Buf {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn fourcc(&mut self, s: &[u8; 4]) {
        self.0.extend_from_slice(s);
    }
    fn chunk(&mut self, id: &[u8; 4], body: &[u8]) {
        self.fourcc(id);
        self.u32(body.len() as u32);
        self.0.extend_from_slice(body);
        if body.len() % 2 == 1 {
            self.0.push(0);
        }
    }
    fn list(&mut self, kind: &[u8; 4], body: &[u8]) {
        self.fourcc(b"LIST");
        self.u32(body.len() as u32 + 4);
        self.fourcc(kind);
        self.0.extend_from_slice(body);
    }
}

/// Top-down BGR rows padded to 4 bytes (DIB with negative height).
fn dib(frame: &ImageFrame) -> Vec<u8> {
    let row = (frame.width * 3).div_ceil(4) * 4;
    let mut out = vec![0u8; row * frame.height];
    for y in 0..frame.height {
        let dst = &mut out[y * row..];
        for x in 0..frame.width {
            let [r, g, b] = frame.pixel(x, y);
            dst[3 * x..3 * x + 3].copy_from_slice(&[b, g, r]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn stream_header(
    kind: &[u8; 4],
    handler: &[u8; 4],
    scale: u32,
    rate: u32,
    length: u32,
    buffer: u32,
    sample_size: u32,
    w: u16,
    h: u16,
) -> Vec<u8> {
    let mut b = Buf(Vec::with_capacity(56));
    b.fourcc(kind);
    b.fourcc(handler);
    b.u32(0); // flags
    b.u16(0); // priority
    b.u16(0); // language
    b.u32(0); // initial frames
    b.u32(scale);
    b.u32(rate);
    b.u32(0); // start
    b.u32(length);
    b.u32(buffer);
    b.u32(u32::MAX); // quality
    b.u32(sample_size);
    for v in [0u16, 0, w, h] {
        b.u16(v);
    }
    b.0
}

/// Serializes the AVI file in memory. Audio samples for video frame `i` are
/// `round(i * sr / fps) .. round((i + 1) * sr / fps)`; any remainder goes
/// with the last frame.
pub fn avi_bytes(frames: &[ImageFrame], audio: &Waveform, fps: u32) -> Result<Vec<u8>> {
    let first = frames.first().ok_or_else(|| Error::invalid("no video frames"))?;
    let (w, h) = (first.width, first.height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::invalid("video frames differ in size"));
    }
    let n = frames.len();
    let sr = audio.sample_rate as u64;
    let frame_bytes = ((w * 3).div_ceil(4) * 4 * h) as u32;
    let bounds: Vec<usize> = (0..=n)
        .map(|i| {
            if i == n {
                audio.len()
            } else {
                (((i as u64 * sr) as f64 / fps as f64).round() as usize).min(audio.len())
            }
        })
        .collect();
    let max_audio = bounds.windows(2).map(|b| b[1] - b[0]).max().unwrap_or(0) as u32 * 2;

    let mut hdrl = Buf(Vec::new());
    let mut avih = Buf(Vec::new());
    avih.u32((1_000_000 / fps as u64) as u32);
    avih.u32(frame_bytes * fps + sr as u32 * 2);
    avih.u32(0);
    avih.u32(AVIF_HASINDEX | AVIF_ISINTERLEAVED);
    avih.u32(n as u32);
    avih.u32(0);
    avih.u32(2);
    avih.u32(frame_bytes + max_audio + 16);
    avih.u32(w as u32);
    avih.u32(h as u32);
    for _ in 0..4 {
        avih.u32(0);
    }
    hdrl.chunk(b"avih", &avih.0);

    let mut vstrl = Buf(Vec::new());
    vstrl.chunk(
        b"strh",
        &stream_header(b"vids", b"DIB ", 1, fps, n as u32, frame_bytes, 0, w as u16, h as u16),
    );
    let mut bih = Buf(Vec::new());
    bih.u32(40);
    bih.u32(w as u32);
    bih.u32((-(h as i32)) as u32);
    bih.u16(1);
    bih.u16(24);
    bih.u32(0); // BI_RGB
    bih.u32(frame_bytes);
    bih.u32(0);
    bih.u32(0);
    bih.u32(0);
    bih.u32(0);
    vstrl.chunk(b"strf", &bih.0);
    hdrl.list(b"strl", &vstrl.0);

    let mut astrl = Buf(Vec::new());
    astrl.chunk(
        b"strh",
        &stream_header(
            b"auds",
            &[0; 4],
            2,
            sr as u32 * 2,
            audio.len() as u32,
            max_audio,
            2,
            0,
            0,
        ),
    );
    let mut wfx = Buf(Vec::new());
    wfx.u16(1); // PCM
    wfx.u16(1);
    wfx.u32(sr as u32);
    wfx.u32(sr as u32 * 2);
    wfx.u16(2);
    wfx.u16(16);
    astrl.chunk(b"strf", &wfx.0);
    hdrl.list(b"strl", &astrl.0);

    let mut movi = Buf(Vec::new());
    let mut index = Buf(Vec::new());
    let mut put = |movi: &mut Buf, id: &[u8; 4], body: &[u8]| {
        index.fourcc(id);
        index.u32(AVIIF_KEYFRAME);
        index.u32(movi.0.len() as u32 + 4);
        index.u32(body.len() as u32);
        movi.chunk(id, body);
    };
    for (i, f) in frames.iter().enumerate() {
        put(&mut movi, b"00dc", &dib(f));
        let pcm: Vec<u8> = audio.samples[bounds[i]..bounds[i + 1]]
            .iter()
            .flat_map(|&s| pcm16(s).to_le_bytes())
            .collect();
        if !pcm.is_empty() {
            put(&mut movi, b"01wb", &pcm);
        }
    }

    let mut body = Buf(Vec::new());
    body.fourcc(b"AVI ");
    body.list(b"hdrl", &hdrl.0);
    body.list(b"movi", &movi.0);
    body.chunk(b"idx1", &index.0);
    let mut out = Buf(Vec::with_capacity(body.0.len() + 8));
    out.fourcc(b"RIFF");
    out.u32(body.0.len() as u32);
    out.0.extend_from_slice(&body.0);
    Ok(out.0)
}

/// Writes the AVI atomically (temp file + rename).
pub fn write_avi(path: &Path, frames: &[ImageFrame], audio: &Waveform, fps: u32) -> Result<()> {
    let bytes = avi_bytes(frames, audio, fps)?;
    let tmp = path.with_extension("avi.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
