//! Network input assembly.
//!
//! The temporal stream consumes stacks of P-frame motion vector fields as a
//! 4D volume [N_T, N_T, 2, T]; the spatial stream consumes RGB frames as
//! [N_S, N_S, 3]. Training preparation is randomized (multi-scale crop,
//! flip); test preparation is the deterministic multi-crop protocol.

use crate::codec::EncodedVideo;
use crate::error::{Error, Result};
use crate::sensor::{extract_mv_fields, fill_intra, MotionVectorField};
use crate::tensor::Tensor;
use crate::video::Frame;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct TemporalInputConfig {
    pub n_t: usize,
    pub t: usize,
    pub crop_scales: Vec<f64>,
    /// Divisor applied after zero-centering; the codec search range, so
    /// voxels land in [-1, 1] like the spatial stream's samples.
    pub flow_scale: f64,
}

impl Default for TemporalInputConfig {
    fn default() -> TemporalInputConfig {
        TemporalInputConfig {
            n_t: 24,
            t: 160,
            crop_scales: vec![0.5, 0.667, 0.833, 1.0],
            flow_scale: 8.0,
        }
    }
}

impl TemporalInputConfig {
    /// Short-clip profile: same geometry, 32 fields deep.
    pub fn desk() -> TemporalInputConfig {
        TemporalInputConfig { t: 32, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_t % 8 != 0 {
            return Err(Error::InvalidConfig("N_T must be a positive multiple of 8".into()));
        }
        if self.t == 0 {
            return Err(Error::InvalidConfig("T must be >= 1".into()));
        }
        if self.crop_scales.is_empty() || self.crop_scales.iter().any(|&c| c <= 0.0 || c > 1.0) {
            return Err(Error::InvalidConfig("crop scales must lie in (0, 1]".into()));
        }
        if self.flow_scale <= 0.0 {
            return Err(Error::InvalidConfig("flow scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpatialInputConfig {
    pub resize_short_side: usize,
    pub n_s: usize,
    pub crop_scales: Vec<f64>,
}

impl Default for SpatialInputConfig {
    fn default() -> SpatialInputConfig {
        SpatialInputConfig { resize_short_side: 256, n_s: 224, crop_scales: vec![0.857, 1.0, 1.143] }
    }
}

impl SpatialInputConfig {
    pub fn validate(&self) -> Result<()> {
        let max_d = self.crop_scales.iter().cloned().fold(f64::MIN, f64::max);
        if self.crop_scales.is_empty() || self.n_s as f64 > self.resize_short_side as f64 * max_d {
            return Err(Error::InvalidConfig(
                "N_S must fit the largest crop of the resized short side".into(),
            ));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Gathers exactly `t` P-frame fields starting at P-index `start`, wrapping
/// to the first P-frame when the stream runs out. Intra holes are filled so
/// the volume is dense.
pub fn collect_p_frames(
    bitstream: &EncodedVideo,
    start: usize,
    t: usize,
) -> Result<Vec<MotionVectorField>> {
    let (fields, _) = extract_mv_fields(bitstream)?;
    if fields.is_empty() {
        return Err(Error::NoTemporalData);
    }
    let n = fields.len();
    let start = start % n;
    let mut out = Vec::with_capacity(t);
    for k in 0..t {
        let off = start + k;
        let idx = if off < n { off } else { (off - n) % n };
        out.push(fill_intra(&fields[idx]));
    }
    Ok(out)
}

/// Horizontal flip of a field: columns mirrored, x component negated.
pub fn hflip_field(field: &MotionVectorField) -> MotionVectorField {
    let mut out = field.clone();
    for row in 0..field.rows {
        for col in 0..field.cols {
            let (dx, dy) = field.grid[row * field.cols + (field.cols - 1 - col)];
            out.grid[row * field.cols + col] = (-dx, dy);
            out.source[row * field.cols + col] =
                field.source[row * field.cols + (field.cols - 1 - col)];
        }
    }
    out
}

/// Center-aligned bilinear resample of a row-major plane.
fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let mut out = vec![0.0; dw * dh];
    for y in 0..dh {
        let v = ((y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = v.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = v - y0 as f64;
        for x in 0..dw {
            let u = ((x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = u.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = u - x0 as f64;
            let a = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let b = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out[y * dw + x] = a * (1.0 - fy) + b * fy;
        }
    }
    out
}

/// Assembles one [N_T, N_T, 2, T] volume from a fixed crop description.
/// Per frame and per component the mean is subtracted after the resize, so
/// every emitted slice is zero-centered.
fn build_temporal_volume(
    fields: &[MotionVectorField],
    cfg: &TemporalInputConfig,
    n_c: usize,
    ox: usize,
    oy: usize,
    flip: bool,
) -> Result<Tensor> {
    let (cols, rows) = (fields[0].cols, fields[0].rows);
    if n_c > cols || n_c > rows {
        return Err(Error::InvalidConfig(format!(
            "crop {n_c} exceeds the {cols}x{rows} motion grid"
        )));
    }
    let n = cfg.n_t;
    let mut out = Tensor::zeros(&[n, n, 2, cfg.t]);
    for (t, field) in fields.iter().enumerate() {
        if field.cols != cols || field.rows != rows {
            return Err(Error::DimensionMismatch("fields have differing grid sizes".into()));
        }
        let flipped;
        let field = if flip {
            flipped = hflip_field(field);
            &flipped
        } else {
            field
        };
        for ch in 0..2 {
            let mut crop = vec![0.0f64; n_c * n_c];
            for y in 0..n_c {
                for x in 0..n_c {
                    let src = if flip {
                        // Whole-field flip plus the mirrored window reduces
                        // to crop-then-flip of the original [ox, ox+n_c).
                        field.grid[(oy + y) * cols + (cols - n_c - ox + x)]
                    } else {
                        field.grid[(oy + y) * cols + (ox + x)]
                    };
                    crop[y * n_c + x] = if ch == 0 { src.0 as f64 } else { src.1 as f64 };
                }
            }
            let resized = resize_bilinear(&crop, n_c, n_c, n, n);
            let mean = resized.iter().sum::<f64>() / resized.len() as f64;
            for y in 0..n {
                for x in 0..n {
                    let idx = out.at4(y, x, ch, t);
                    out.data[idx] = (resized[y * n + x] - mean) / cfg.flow_scale;
                }
            }
        }
    }
    Ok(out)
}

/// Training-time temporal augmentation: random scale, random crop position,
/// random horizontal flip.
pub fn augment_temporal<R: Rng>(
    fields: &[MotionVectorField],
    cfg: &TemporalInputConfig,
    rng: &mut R,
) -> Result<Tensor> {
    cfg.validate()?;
    if fields.len() != cfg.t {
        return Err(Error::DimensionMismatch(format!(
            "expected {} fields, got {}",
            cfg.t,
            fields.len()
        )));
    }
    let c = cfg.crop_scales[rng.gen_range(0..cfg.crop_scales.len())];
    let n_c = round_half_up(cfg.n_t as f64 * c).max(1);
    let (cols, rows) = (fields[0].cols, fields[0].rows);
    if n_c > cols || n_c > rows {
        return Err(Error::InvalidConfig(format!(
            "crop {n_c} exceeds the {cols}x{rows} motion grid"
        )));
    }
    let ox = rng.gen_range(0..=cols - n_c);
    let oy = rng.gen_range(0..=rows - n_c);
    let flip = rng.gen_bool(0.5);
    build_temporal_volume(fields, cfg, n_c, ox, oy, flip)
}

/// The five deterministic crop origins: four corners plus the center.
pub fn test_crop_offsets(cols: usize, rows: usize, n_t: usize) -> Result<[(usize, usize); 5]> {
    if n_t > cols || n_t > rows {
        return Err(Error::InvalidConfig(format!(
            "crop {n_t} exceeds the {cols}x{rows} motion grid"
        )));
    }
    let (cw, ch) = (cols - n_t, rows - n_t);
    Ok([(0, 0), (cw, 0), (0, ch), (cw, ch), (cw / 2, ch / 2)])
}

/// Test protocol: 2 volumes (P-start 0 and halfway) x (4 corners + center +
/// flipped center) = 12 zero-centered inputs.
pub fn prepare_temporal_test_inputs(
    bitstream: &EncodedVideo,
    cfg: &TemporalInputConfig,
) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    let (all, _) = extract_mv_fields(bitstream)?;
    if all.is_empty() {
        return Err(Error::NoTemporalData);
    }
    let n_p = all.len();
    let mut out = Vec::with_capacity(12);
    for start in [0, n_p / 2] {
        let fields = collect_p_frames(bitstream, start, cfg.t)?;
        let offsets = test_crop_offsets(fields[0].cols, fields[0].rows, cfg.n_t)?;
        for &(ox, oy) in &offsets {
            out.push(build_temporal_volume(&fields, cfg, cfg.n_t, ox, oy, false)?);
        }
        let (cx, cy) = offsets[4];
        out.push(build_temporal_volume(&fields, cfg, cfg.n_t, cx, cy, true)?);
    }
    Ok(out)
}

/// Single center-crop volume starting at the first P-frame: the fast
/// evaluation path.
pub fn prepare_temporal_center_input(
    bitstream: &EncodedVideo,
    cfg: &TemporalInputConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let fields = collect_p_frames(bitstream, 0, cfg.t)?;
    let offsets = test_crop_offsets(fields[0].cols, fields[0].rows, cfg.n_t)?;
    let (cx, cy) = offsets[4];
    build_temporal_volume(&fields, cfg, cfg.n_t, cx, cy, false)
}

/// Aspect-preserving target size with the short side fixed; the long side
/// rounds half up.
pub fn resized_dims(w: usize, h: usize, short: usize) -> (usize, usize) {
    if w <= h {
        (short, round_half_up(h as f64 * short as f64 / w as f64))
    } else {
        (round_half_up(w as f64 * short as f64 / h as f64), short)
    }
}

fn frame_planes_f64(frame: &Frame) -> [Vec<f64>; 3] {
    let conv = |p: &Vec<u8>| p.iter().map(|&v| v as f64).collect::<Vec<_>>();
    [conv(&frame.planes[0]), conv(&frame.planes[1]), conv(&frame.planes[2])]
}

/// Crops `side` x `side` at (ox, oy) from resized planes, optionally flips,
/// resizes to N_S and zero-centers each channel.
fn build_spatial_tensor(
    planes: &[Vec<f64>; 3],
    rw: usize,
    rh: usize,
    side: usize,
    ox: usize,
    oy: usize,
    flip: bool,
    n_s: usize,
) -> Tensor {
    debug_assert!(oy + side <= rh);
    let mut out = Tensor::zeros(&[n_s, n_s, 3]);
    for (ch, plane) in planes.iter().enumerate() {
        let mut crop = vec![0.0f64; side * side];
        for y in 0..side {
            for x in 0..side {
                let sx = if flip { ox + side - 1 - x } else { ox + x };
                crop[y * side + x] = plane[(oy + y) * rw + sx];
            }
        }
        let resized = resize_bilinear(&crop, side, side, n_s, n_s);
        let mean = resized.iter().sum::<f64>() / resized.len() as f64;
        for y in 0..n_s {
            for x in 0..n_s {
                let idx = out.at3(y, x, ch);
                out.data[idx] = resized[y * n_s + x] - mean;
            }
        }
    }
    out
}

fn resize_planes(frame: &Frame, short: usize) -> Result<([Vec<f64>; 3], usize, usize)> {
    if frame.width < 16 || frame.height < 16 {
        return Err(Error::InvalidInput("frame smaller than 16x16".into()));
    }
    let (rw, rh) = resized_dims(frame.width, frame.height, short);
    // Samples land in [0, 1] so the later per-channel centering leaves
    // network inputs on the same scale as the temporal stream.
    let mut planes = frame_planes_f64(frame);
    for p in &mut planes {
        for v in p.iter_mut() {
            *v /= 255.0;
        }
    }
    let resized = [
        resize_bilinear(&planes[0], frame.width, frame.height, rw, rh),
        resize_bilinear(&planes[1], frame.width, frame.height, rw, rh),
        resize_bilinear(&planes[2], frame.width, frame.height, rw, rh),
    ];
    Ok((resized, rw, rh))
}

/// Training-time spatial augmentation: multi-scale random crop of the
/// resized frame, random flip, per-channel zero-centering.
pub fn prepare_spatial_train_input<R: Rng>(
    frame: &Frame,
    cfg: &SpatialInputConfig,
    rng: &mut R,
) -> Result<Tensor> {
    cfg.validate()?;
    let (planes, rw, rh) = resize_planes(frame, cfg.resize_short_side)?;
    let d = cfg.crop_scales[rng.gen_range(0..cfg.crop_scales.len())];
    let side = round_half_up(cfg.n_s as f64 * d).min(rw.min(rh));
    let ox = rng.gen_range(0..=rw - side);
    let oy = rng.gen_range(0..=rh - side);
    let flip = rng.gen_bool(0.5);
    Ok(build_spatial_tensor(&planes, rw, rh, side, ox, oy, flip, cfg.n_s))
}

/// Evenly spaced frame picks: round(i * (n - 1) / 4) for i = 0..4.
pub fn evenly_spaced_indices(n: usize) -> [usize; 5] {
    let mut out = [0usize; 5];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = round_half_up(i as f64 * (n - 1) as f64 / 4.0);
    }
    out
}

/// Test protocol: 5 evenly spaced frames x (center crop + flip) = 10
/// zero-centered inputs.
pub fn prepare_spatial_test_inputs(
    frames: &[Frame],
    cfg: &SpatialInputConfig,
) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to prepare".into()));
    }
    let mut out = Vec::with_capacity(10);
    for idx in evenly_spaced_indices(frames.len()) {
        let (planes, rw, rh) = resize_planes(&frames[idx], cfg.resize_short_side)?;
        let side = cfg.n_s.min(rw.min(rh));
        let (ox, oy) = ((rw - side) / 2, (rh - side) / 2);
        for flip in [false, true] {
            out.push(build_spatial_tensor(&planes, rw, rh, side, ox, oy, flip, cfg.n_s));
        }
    }
    Ok(out)
}
