use sha2::{Digest, Sha256};

use crate::config::CanvasConfig;
use crate::error::{Error, Result};
use crate::motion::{COORD_LIMIT, FRAME_DIM, NUM_LANDMARKS};

pub const BACKGROUND: [u8; 3] = [24, 24, 32];
pub const EDGE_COLOR: [u8; 3] = [70, 130, 190];
pub const POINT_COLOR: [u8; 3] = [215, 215, 215];
/// Color of the single pixel marking each landmark center. No other drawing
/// uses it.
pub const CENTER_COLOR: [u8; 3] = [255, 40, 40];

/// Standard 68-point connectivity: jaw, brows, nose bridge and base, closed
/// eye and lip contours.
pub fn landmark_edges() -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    let chain = |e: &mut Vec<(usize, usize)>, a: usize, b: usize, closed: bool| {
        for i in a..b {
            e.push((i, i + 1));
        }
        if closed {
            e.push((b, a));
        }
    };
    chain(&mut e, 0, 16, false);
    chain(&mut e, 17, 21, false);
    chain(&mut e, 22, 26, false);
    chain(&mut e, 27, 30, false);
    chain(&mut e, 31, 35, false);
    chain(&mut e, 36, 41, true);
    chain(&mut e, 42, 47, true);
    chain(&mut e, 48, 59, true);
    chain(&mut e, 60, 67, true);
    e
}

/// `H x W` RGB image, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ImageFrame {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let pixels = color.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, pixels }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Hex SHA-256 of the pixel buffer.
    pub fn hash(&self) -> String {
        Sha256::digest(&self.pixels)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Normalized `(x, y)` (y up) to integer pixel coordinates:
/// `px = round((x + 1) / 2 * (W - 1))`, `py = round((1 - y) / 2 * (H - 1))`,
/// rounding half away from zero.
pub fn to_pixel(x: f32, y: f32, cfg: &CanvasConfig) -> (i64, i64) {
    let px = ((x as f64 + 1.0) / 2.0 * (cfg.width - 1) as f64).round() as i64;
    let py = ((1.0 - y as f64) / 2.0 * (cfg.height - 1) as f64).round() as i64;
    (px, py)
}

fn line(img: &mut ImageFrame, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        img.put(x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn disc(img: &mut ImageFrame, (cx, cy): (i64, i64), r: i64, c: [u8; 3]) {
    for y in -r..=r {
        for x in -r..=r {
            if x * x + y * y <= r * r {
                img.put(cx + x, cy + y, c);
            }
        }
    }
}

/// Draws one landmark frame (`68 x 3` values, z ignored). Returns the image
/// and the number of coordinates clamped into `[-1.5, 1.5]`.
pub fn rasterize_landmarks(frame: &[f32], cfg: &CanvasConfig) -> Result<(ImageFrame, usize)> {
    cfg.validate()?;
    if frame.len() != FRAME_DIM {
        return Err(Error::invalid(format!(
            "landmark frame has {} values, expected {FRAME_DIM}",
            frame.len()
        )));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("landmark frame has non-finite values"));
    }
    let mut clamped = 0;
    let pts: Vec<(i64, i64)> = frame
        .chunks_exact(3)
        .map(|p| {
            let mut c = |v: f32| {
                if v.abs() > COORD_LIMIT {
                    clamped += 1;
                }
                v.clamp(-COORD_LIMIT, COORD_LIMIT)
            };
            let (x, y) = (c(p[0]), c(p[1]));
            to_pixel(x, y, cfg)
        })
        .collect();
    debug_assert_eq!(pts.len(), NUM_LANDMARKS);
    let mut img = ImageFrame::filled(cfg.width, cfg.height, BACKGROUND);
    if cfg.draw_edges {
        for (a, b) in landmark_edges() {
            line(&mut img, pts[a], pts[b], EDGE_COLOR);
        }
    }
    for &p in &pts {
        disc(&mut img, p, cfg.point_radius as i64, POINT_COLOR);
    }
    for &p in &pts {
        img.put(p.0, p.1, CENTER_COLOR);
    }
    Ok((img, clamped))
}

/// Source frame for each of `round(duration * fps)` output frames, picking
/// the nearest source frame in time.
pub fn resample_indices(n_src: usize, src_fps: f64, dst_fps: f64, duration_secs: f64) -> Vec<usize> {
    if n_src == 0 {
        return Vec::new();
    }
    let n_out = ((duration_secs * dst_fps).round() as usize).max(1);
    (0..n_out)
        .map(|i| ((i as f64 * src_fps / dst_fps).round() as usize).min(n_src - 1))
        .collect()
}

/// Writes `frame_00000.png`, `frame_00001.png`, ... into `dir`.
pub fn dump_frames(frames: &[ImageFrame], dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{i:05}.png"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), f.width as u32, f.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let io = |e: png::EncodingError| Error::io(&path, std::io::Error::other(e.to_string()));
        let mut w = enc.write_header().map_err(io)?;
        w.write_image_data(&f.pixels).map_err(io)?;
    }
    Ok(())
}
