//! Synthetic labeled corpora with exact ground-truth optical flow.
//!
//! Every video is a pure function of its spec (texture kind, motion kind,
//! velocity, seed). A moving textured region over a static background gives
//! rigid integer-pixel motion, so translate-class flow is exact and the
//! block-matching codec can recover it bit-for-bit.

use crate::codec::{encode, CodecConfig};
use crate::error::{Error, Result};
use crate::video::{Frame, VideoSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Noise,
    Checker,
    Gradient,
    Stripes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Translate,
    Oscillate,
    RotateApprox,
    Static,
}

/// Full description of one synthetic video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_id: usize,
    pub texture: TextureKind,
    pub motion: MotionKind,
    /// Pixels per frame per axis (integer values keep translate flow exact).
    pub velocity: (f32, f32),
    /// Frames per oscillation cycle (oscillate motion only).
    pub period: u32,
    /// Side fraction of the moving region; 1.0 moves the whole frame
    /// toroidally.
    pub object_fraction: f32,
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width % 16 != 0 || self.height % 16 != 0 {
            return Err(Error::InvalidInput("dimensions must be positive multiples of 16".into()));
        }
        if self.num_frames == 0 {
            return Err(Error::InvalidInput("num_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.object_fraction) {
            return Err(Error::InvalidInput("object_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// True when the per-frame motion cannot be represented by a codec
    /// search range of `s` pixels. Allowed, but EPE will degrade.
    pub fn exceeds_search_range(&self, s: u8) -> bool {
        self.velocity.0.abs() > s as f32 || self.velocity.1.abs() > s as f32
    }
}

/// Dense per-pixel ground truth. `flows[t]` is the displacement of content
/// from frame `t-1` into frame `t` (`flows[0]` is zero), aligned with the
/// P-frame motion fields.
#[derive(Debug, Clone)]
pub struct GroundTruthFlow {
    pub width: usize,
    pub height: usize,
    pub flows: Vec<Vec<(f32, f32)>>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Deterministic texture sample at integer coordinates, RGB.
struct Texture {
    kind: TextureKind,
    seed: u64,
    // Parameters drawn once per video.
    cell: i64,
    phase: (i64, i64),
    colors: [[u8; 3]; 2],
    grad_dir: (f32, f32),
}

impl Texture {
    fn new(kind: TextureKind, rng: &mut ChaCha8Rng) -> Texture {
        let cell = rng.gen_range(6..14);
        let phase = (rng.gen_range(0..64), rng.gen_range(0..64));
        let mut colors = [[0u8; 3]; 2];
        for c in colors.iter_mut() {
            for ch in c.iter_mut() {
                *ch = rng.gen_range(16..240);
            }
        }
        // Keep the two checker/stripe colors far apart so blocks have texture.
        if colors[0][0].abs_diff(colors[1][0]) < 60 {
            colors[1][0] = colors[1][0].wrapping_add(120).clamp(16, 239);
        }
        let angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
        Texture {
            kind,
            seed: rng.gen(),
            cell,
            phase,
            colors,
            grad_dir: (angle.cos(), angle.sin()),
        }
    }

    fn sample(&self, u: i64, v: i64) -> [u8; 3] {
        match self.kind {
            TextureKind::Noise => {
                let h = splitmix64(
                    self.seed ^ (u as u64).wrapping_mul(0x9E3779B97F4A7C15) ^ (v as u64) << 21,
                );
                [(h & 0xFF) as u8, ((h >> 8) & 0xFF) as u8, ((h >> 16) & 0xFF) as u8]
            }
            TextureKind::Checker => {
                let cu = (u + self.phase.0).div_euclid(self.cell);
                let cv = (v + self.phase.1).div_euclid(self.cell);
                self.colors[((cu + cv).rem_euclid(2)) as usize]
            }
            TextureKind::Stripes => {
                let band = (u + 2 * v + self.phase.0).div_euclid(self.cell);
                self.colors[band.rem_euclid(2) as usize]
            }
            TextureKind::Gradient => {
                let t = self.grad_dir.0 * u as f32 + self.grad_dir.1 * v as f32;
                let base = ((t * 2.0).rem_euclid(256.0)) as i32;
                [
                    base.clamp(0, 255) as u8,
                    (255 - base).clamp(0, 255) as u8,
                    self.colors[0][2],
                ]
            }
        }
    }
}

/// Integer object offset at frame `t` under the requested motion schedule.
fn offset_at(spec: &SyntheticSpec, t: usize) -> (i64, i64) {
    let (vx, vy) = spec.velocity;
    match spec.motion {
        MotionKind::Static | MotionKind::RotateApprox => (0, 0),
        MotionKind::Translate => ((vx * t as f32).round() as i64, (vy * t as f32).round() as i64),
        MotionKind::Oscillate => {
            // Move +v for half a period, then -v for half a period.
            let half = (spec.period / 2).max(1) as usize;
            let mut x = 0f32;
            let mut y = 0f32;
            for k in 0..t {
                let dir = if (k / half) % 2 == 0 { 1.0 } else { -1.0 };
                x += dir * vx;
                y += dir * vy;
            }
            (x.round() as i64, y.round() as i64)
        }
    }
}

/// Renders the described video together with its exact ground-truth flow.
pub fn generate(spec: &SyntheticSpec) -> Result<(VideoSequence, GroundTruthFlow)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tex = Texture::new(spec.texture, &mut rng);
    let bg: [u8; 3] = [rng.gen_range(20..100), rng.gen_range(20..100), rng.gen_range(20..100)];
    let (w, h) = (spec.width as i64, spec.height as i64);
    let ow = ((spec.width as f32 * spec.object_fraction).round() as i64).clamp(1, w);
    let oh = ((spec.height as f32 * spec.object_fraction).round() as i64).clamp(1, h);
    let full_frame = ow == w && oh == h;
    let base = (rng.gen_range(0..w), rng.gen_range(0..h));
    let rot_step: f32 = if spec.motion == MotionKind::RotateApprox {
        spec.velocity.0.max(0.5).to_radians()
    } else {
        0.0
    };

    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut flows = Vec::with_capacity(spec.num_frames);
    for t in 0..spec.num_frames {
        let off = offset_at(spec, t);
        let prev_off = if t == 0 { off } else { offset_at(spec, t - 1) };
        let step = (off.0 - prev_off.0, off.1 - prev_off.1);
        let mut frame = Frame::new(spec.width, spec.height);
        let mut flow = vec![(0.0f32, 0.0f32); spec.width * spec.height];
        if spec.motion == MotionKind::RotateApprox {
            let angle = rot_step * t as f32;
            let (sin, cos) = angle.sin_cos();
            let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (rx, ry) = (x as f32 - cx, y as f32 - cy);
                    let u = (cos * rx + sin * ry + cx).round() as i64;
                    let v = (-sin * rx + cos * ry + cy).round() as i64;
                    let c = tex.sample(u.rem_euclid(w), v.rem_euclid(h));
                    for p in 0..3 {
                        frame.set_sample(p, x, y, c[p]);
                    }
                    if t > 0 {
                        // Approximate rigid-rotation flow for one step.
                        let (s1, c1) = rot_step.sin_cos();
                        let px = c1 * rx - s1 * ry + cx;
                        let py = s1 * rx + c1 * ry + cy;
                        flow[y * spec.width + x] = (x as f32 - px, y as f32 - py);
                    }
                }
            }
        } else {
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (xi, yi) = (x as i64, y as i64);
                    // Position relative to the object's wrapped rectangle.
                    let ru = (xi - base.0 - off.0).rem_euclid(w);
                    let rv = (yi - base.1 - off.1).rem_euclid(h);
                    let inside = full_frame || (ru < ow && rv < oh);
                    let c = if inside { tex.sample(ru, rv) } else { bg };
                    for p in 0..3 {
                        frame.set_sample(p, x, y, c[p]);
                    }
                    if t > 0 && inside {
                        flow[y * spec.width + x] = (step.0 as f32, step.1 as f32);
                    }
                }
            }
        }
        frames.push(frame);
        flows.push(flow);
    }
    Ok((
        VideoSequence::new(spec.width, spec.height, 25, frames)?,
        GroundTruthFlow { width: spec.width, height: spec.height, flows },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line: where the video lives and what it is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub name: String,
    pub class_id: usize,
    pub split: Split,
    pub spec: SyntheticSpec,
}

/// Corpus shape knobs for [`build_dataset`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_classes: usize,
    pub videos_per_class: usize,
    pub split_ratio: f32,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig {
            n_classes: 6,
            videos_per_class: 10,
            split_ratio: 0.8,
            seed: 7,
            // 320x240 reproduces the 40x30 motion grid.
            width: 320,
            height: 240,
            num_frames: 34,
        }
    }
}

/// Texture/motion assignment per class. Classes 0 and 1 share a texture and
/// differ only in motion; classes 0 and 2 share motion and differ only in
/// texture, which is what the stream-complementarity analysis needs.
pub fn class_design(class_id: usize) -> (TextureKind, MotionKind, (f32, f32)) {
    match class_id % 6 {
        0 => (TextureKind::Checker, MotionKind::Translate, (3.0, 0.0)),
        1 => (TextureKind::Checker, MotionKind::Translate, (0.0, 3.0)),
        2 => (TextureKind::Stripes, MotionKind::Translate, (3.0, 0.0)),
        3 => (TextureKind::Stripes, MotionKind::Translate, (0.0, 3.0)),
        4 => (TextureKind::Noise, MotionKind::Oscillate, (3.0, 0.0)),
        _ => (TextureKind::Gradient, MotionKind::Static, (0.0, 0.0)),
    }
}

/// Builds a disjoint train/test manifest, a reproducible function of the
/// seed. Texture randomness is keyed by (seed, video index, texture kind)
/// only, so classes that differ solely in motion draw their frames from an
/// identical appearance distribution.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Vec<ManifestRecord>> {
    if cfg.n_classes < 2 {
        return Err(Error::InvalidConfig("need at least 2 classes".into()));
    }
    let n_train = (cfg.videos_per_class as f32 * cfg.split_ratio).round() as usize;
    let mut records = Vec::new();
    for class_id in 0..cfg.n_classes {
        let (texture, motion, velocity) = class_design(class_id);
        for idx in 0..cfg.videos_per_class {
            let tex_key = match texture {
                TextureKind::Noise => 1u64,
                TextureKind::Checker => 2,
                TextureKind::Gradient => 3,
                TextureKind::Stripes => 4,
            };
            let seed = splitmix64(cfg.seed ^ (idx as u64) << 8 ^ tex_key << 40);
            let spec = SyntheticSpec {
                class_id,
                texture,
                motion,
                velocity,
                period: 8,
                object_fraction: 0.5,
                num_frames: cfg.num_frames,
                width: cfg.width,
                height: cfg.height,
                seed,
            };
            records.push(ManifestRecord {
                name: format!("c{class_id:02}_v{idx:03}"),
                class_id,
                split: if idx < n_train { Split::Train } else { Split::Test },
                spec,
            });
        }
    }
    Ok(records)
}

/// Writes the manifest as JSON lines.
pub fn write_manifest<W: Write>(records: &[ManifestRecord], w: &mut W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            offset: i,
            msg: format!("manifest line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// Renders and encodes every manifest entry into `dir` as `<name>.mvb` plus
/// raw planar `<name>.rgb`, and writes `manifest.jsonl`.
pub fn materialize(
    records: &[ManifestRecord],
    dir: &Path,
    codec_cfg: &CodecConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    records.par_iter().try_for_each(|r| -> Result<()> {
        let (video, _flow) = generate(&r.spec)?;
        let enc = encode(&video, codec_cfg)?;
        enc.write_file(&dir.join(format!("{}.mvb", r.name)))?;
        let mut raw = Vec::new();
        video.write_raw(&mut raw)?;
        std::fs::write(dir.join(format!("{}.rgb", r.name)), raw)?;
        Ok(())
    })?;
    let mut f = std::fs::File::create(dir.join("manifest.jsonl"))?;
    write_manifest(records, &mut f)
}
