//! The codec as an activity sensor: motion-vector extraction without texture
//! decoding, intra-hole filling, field interpolation, per-MB activity maps,
//! and selective macroblock decoding with rendered frames.

pub use crate::codec::ByteAccessCounter;
use crate::codec::{self, decode_frame_counted, EncodedVideo, FrameType, MbMode, PARTITION_SIZE};
use crate::error::{Error, Result};
use crate::video::Frame;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Sentinel for `X = inf`: only the first frame is fully decoded.
pub const X_INF: u32 = u32::MAX;

/// Where a motion-vector cell came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvSource {
    /// Carried directly by an Inter MB partition.
    Inter,
    /// Hole left by an Intra MB, to be filled from its neighborhood.
    Filled,
}

/// Per-frame motion vector grid at 8x8-block resolution (finer after
/// interpolation). `grid[row * cols + col]` is the codec displacement
/// `(dx, dy)`: prediction(x, y) = reference(x + dx, y + dy).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionVectorField {
    pub frame_index: usize,
    pub cols: usize,
    pub rows: usize,
    pub grid: Vec<(f32, f32)>,
    pub source: Vec<MvSource>,
}

impl MotionVectorField {
    pub fn mv(&self, col: usize, row: usize) -> (f32, f32) {
        self.grid[row * self.cols + col]
    }

    /// The estimated optical flow at a cell: the negated motion vector, since
    /// MVs point from the current frame into its reference.
    pub fn flow(&self, col: usize, row: usize) -> (f32, f32) {
        let (dx, dy) = self.mv(col, row);
        (-dx, -dy)
    }
}

/// Per-MB activity under threshold `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMap {
    pub frame_index: usize,
    pub cols: usize,
    pub rows: usize,
    pub threshold: f32,
    pub active: Vec<bool>,
}

/// Settings for selective decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveDecodeConfig {
    /// Full-decode interval in frames; [`X_INF`] means only frame 0.
    pub x: u32,
    /// Render interval in frames, `1 <= r <= x`.
    pub r: u32,
    /// Activity threshold; an MB is active when some partition MV component
    /// strictly exceeds it in magnitude.
    pub a: f32,
}

impl SelectiveDecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x < 1 || self.r < 1 {
            return Err(Error::InvalidConfig("X and R must be >= 1".into()));
        }
        if self.x != X_INF && self.r > self.x {
            return Err(Error::InvalidConfig(format!(
                "render interval R={} must not exceed decode interval X={}",
                self.r, self.x
            )));
        }
        if self.a < 0.0 {
            return Err(Error::InvalidConfig("activity threshold A must be >= 0".into()));
        }
        Ok(())
    }
}

/// Extracts one motion vector field per P-frame, skipping every residual byte
/// via the record length prefixes. Intra MBs leave `Filled` holes.
pub fn extract_mv_fields(
    bitstream: &EncodedVideo,
) -> Result<(Vec<MotionVectorField>, ByteAccessCounter)> {
    let mut cur = bitstream.cursor();
    let header = codec::parse_header(&mut cur)?;
    let cols = header.width / PARTITION_SIZE;
    let rows = header.height / PARTITION_SIZE;
    let mut fields = Vec::new();
    for idx in 0..header.frame_count {
        let (frame_type, len) = codec::parse_frame_preamble(&mut cur)?;
        if frame_type == FrameType::I {
            cur.skip_residual(len)?;
            continue;
        }
        let mut field = MotionVectorField {
            frame_index: idx,
            cols,
            rows,
            grid: vec![(0.0, 0.0); cols * rows],
            source: vec![MvSource::Filled; cols * rows],
        };
        for mby in 0..header.mb_rows() {
            for mbx in 0..header.mb_cols() {
                let (mode, mvs, rlen) = codec::parse_mb_preamble(&mut cur)?;
                cur.skip_residual(rlen)?;
                if mode == MbMode::Inter {
                    for (p, &(dx, dy)) in mvs.iter().enumerate() {
                        let col = 2 * mbx + p % 2;
                        let row = 2 * mby + p / 2;
                        field.grid[row * cols + col] = (dx as f32, dy as f32);
                        field.source[row * cols + col] = MvSource::Inter;
                    }
                }
            }
        }
        fields.push(field);
    }
    Ok((fields, cur.counter))
}

fn median(mut vals: Vec<f32>) -> f32 {
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        (vals[n / 2 - 1] + vals[n / 2]) / 2.0
    }
}

/// Fills Intra holes with the componentwise median of the available
/// 8-neighborhood, pass by pass until nothing changes; unreachable cells
/// (an all-Intra frame) become (0, 0).
pub fn fill_intra(field: &MotionVectorField) -> MotionVectorField {
    let mut out = field.clone();
    let mut available: Vec<bool> = field.source.iter().map(|&s| s == MvSource::Inter).collect();
    loop {
        let mut newly = Vec::new();
        for row in 0..field.rows {
            for col in 0..field.cols {
                let i = row * field.cols + col;
                if available[i] {
                    continue;
                }
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for dr in -1i32..=1 {
                    for dc in -1i32..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (row as i32 + dr, col as i32 + dc);
                        if nr < 0 || nc < 0 || nr >= field.rows as i32 || nc >= field.cols as i32 {
                            continue;
                        }
                        let j = nr as usize * field.cols + nc as usize;
                        if available[j] {
                            xs.push(out.grid[j].0);
                            ys.push(out.grid[j].1);
                        }
                    }
                }
                if !xs.is_empty() {
                    newly.push((i, (median(xs), median(ys))));
                }
            }
        }
        if newly.is_empty() {
            break;
        }
        for (i, mv) in newly {
            out.grid[i] = mv;
            available[i] = true;
        }
    }
    for (i, avail) in available.iter().enumerate() {
        if !avail {
            out.grid[i] = (0.0, 0.0);
        }
    }
    out
}

/// Spatial refinement of a filled field. Target block size 8 is the identity;
/// 4 doubles the grid with bilinear interpolation at the finer cell centers.
pub fn interpolate_field(
    field: &MotionVectorField,
    target_block_size: usize,
) -> Result<MotionVectorField> {
    match target_block_size {
        8 => Ok(field.clone()),
        4 => {
            let cols = field.cols * 2;
            let rows = field.rows * 2;
            let mut grid = Vec::with_capacity(cols * rows);
            let mut source = Vec::with_capacity(cols * rows);
            for row in 0..rows {
                for col in 0..cols {
                    // Fine center in coarse index space.
                    let u = (col as f32 + 0.5) / 2.0 - 0.5;
                    let v = (row as f32 + 0.5) / 2.0 - 0.5;
                    let (c0, fc) = split_clamped(u, field.cols);
                    let (r0, fr) = split_clamped(v, field.rows);
                    let c1 = (c0 + 1).min(field.cols - 1);
                    let r1 = (r0 + 1).min(field.rows - 1);
                    let lerp2 = |f: &dyn Fn(usize, usize) -> f32| {
                        let top = f(c0, r0) * (1.0 - fc) + f(c1, r0) * fc;
                        let bot = f(c0, r1) * (1.0 - fc) + f(c1, r1) * fc;
                        top * (1.0 - fr) + bot * fr
                    };
                    grid.push((
                        lerp2(&|c, r| field.mv(c, r).0),
                        lerp2(&|c, r| field.mv(c, r).1),
                    ));
                    source.push(field.source[r0.min(field.rows - 1) * field.cols + c0]);
                }
            }
            Ok(MotionVectorField { frame_index: field.frame_index, cols, rows, grid, source })
        }
        other => Err(Error::InvalidConfig(format!(
            "unsupported interpolation target block size {other} (expected 8 or 4)"
        ))),
    }
}

fn split_clamped(u: f32, n: usize) -> (usize, f32) {
    if u <= 0.0 {
        (0, 0.0)
    } else if u >= (n - 1) as f32 {
        (n - 1, 0.0)
    } else {
        let i = u.floor() as usize;
        (i, u - i as f32)
    }
}

/// Activity of each MB under threshold `a`: strictly greater than `a` in the
/// L-infinity norm over the MB's four partition MVs; Intra MBs are always
/// active.
pub fn activity_map(field: &MotionVectorField, a: f32) -> ActivityMap {
    let mb_cols = field.cols / 2;
    let mb_rows = field.rows / 2;
    let mut active = vec![false; mb_cols * mb_rows];
    for mby in 0..mb_rows {
        for mbx in 0..mb_cols {
            let mut act = false;
            for p in 0..4 {
                let i = (2 * mby + p / 2) * field.cols + 2 * mbx + p % 2;
                if field.source[i] == MvSource::Filled {
                    act = true;
                    break;
                }
                let (dx, dy) = field.grid[i];
                if dx.abs() > a || dy.abs() > a {
                    act = true;
                    break;
                }
            }
            active[mby * mb_cols + mbx] = act;
        }
    }
    ActivityMap { frame_index: field.frame_index, cols: mb_cols, rows: mb_rows, threshold: a, active }
}

/// Selective decoding: frames at multiples of X are fully decoded and reset
/// the canvas; frames at multiples of R in between are rendered by decoding
/// only active MBs (motion-compensated from the current canvas plus their
/// residual). Returns `(frame_index, frame)` pairs in index order plus the
/// byte-access tally.
pub fn selective_decode(
    bitstream: &EncodedVideo,
    cfg: &SelectiveDecodeConfig,
) -> Result<(Vec<(usize, Frame)>, ByteAccessCounter)> {
    cfg.validate()?;
    let mut cur = bitstream.cursor();
    let header = codec::parse_header(&mut cur)?;
    let q = header.q as i32;
    let mut canvas = Frame::new(header.width, header.height);
    let mut out = Vec::new();

    for idx in 0..header.frame_count {
        let (_frame_type, len) = codec::parse_frame_preamble(&mut cur)?;
        let full = idx == 0 || (cfg.x != X_INF && idx % cfg.x as usize == 0);
        if full {
            let (frame, counter) = decode_frame_counted(bitstream, idx)?;
            cur.counter.merge(&counter);
            cur.seek(len)?;
            canvas = frame;
            out.push((idx, canvas.clone()));
        } else if idx % cfg.r as usize == 0 {
            let reference = canvas.clone();
            for mby in 0..header.mb_rows() {
                for mbx in 0..header.mb_cols() {
                    let (mode, mvs, rlen) = codec::parse_mb_preamble(&mut cur)?;
                    let active = mode == MbMode::Intra
                        || mvs
                            .iter()
                            .any(|&(dx, dy)| (dx as f32).abs() > cfg.a || (dy as f32).abs() > cfg.a);
                    if active {
                        let levels = codec::parse_mb_residual(&mut cur, rlen)?;
                        let rec = codec::MacroblockRecord { mode, mvs, levels };
                        codec::reconstruct_mb(&mut canvas, Some(&reference), mbx, mby, &rec, q);
                    } else {
                        cur.skip_residual(rlen)?;
                    }
                }
            }
            out.push((idx, canvas.clone()));
        } else {
            cur.skip_residual(len)?;
        }
    }
    Ok((out, cur.counter))
}

/// Writes fields in the binary MVF1 layout: magic, u32 frame_count, then per
/// field u16 cols, u16 rows and row-major i16 (dx, dy) pairs.
pub fn write_mvf<W: Write>(fields: &[MotionVectorField], w: &mut W) -> Result<()> {
    w.write_all(b"MVF1")?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        w.write_all(&(f.cols as u16).to_le_bytes())?;
        w.write_all(&(f.rows as u16).to_le_bytes())?;
        for &(dx, dy) in &f.grid {
            w.write_all(&(dx.round() as i16).to_le_bytes())?;
            w.write_all(&(dy.round() as i16).to_le_bytes())?;
        }
    }
    Ok(())
}

/// CSV export of fields: `frame,row,col,dx,dy`.
pub fn write_mv_csv<W: Write>(fields: &[MotionVectorField], w: &mut W) -> Result<()> {
    writeln!(w, "frame,row,col,dx,dy")?;
    for f in fields {
        for row in 0..f.rows {
            for col in 0..f.cols {
                let (dx, dy) = f.mv(col, row);
                writeln!(w, "{},{row},{col},{dx},{dy}", f.frame_index)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, CodecConfig};
    use crate::video::VideoSequence;

    fn textured_frame(w: usize, h: usize, phase: usize) -> Frame {
        let mut f = Frame::new(w, h);
        for y in 0..h {
            for x in 0..w {
                // Aperiodic-ish texture so block matching has a unique best.
                let v = ((x + phase) * 7 + y * 13 + ((x + phase) * y) % 31) % 256;
                f.set_sample(0, x, y, v as u8);
                f.set_sample(1, x, y, (v * 3 % 256) as u8);
                f.set_sample(2, x, y, (255 - v) as u8);
            }
        }
        f
    }

    /// Frames whose texture shifts right by `step` pixels each frame
    /// (toroidal in the generating function, so content moves by (step, 0)).
    fn shifted_video(w: usize, h: usize, n: usize, step: usize) -> VideoSequence {
        let frames = (0..n).map(|t| textured_frame(w, h, 1000 - t * step)).collect();
        VideoSequence::new(w, h, 25, frames).unwrap()
    }

    #[test]
    fn static_stream_gives_zero_fields_without_reading_residuals() {
        let f = textured_frame(64, 64, 0);
        let v = VideoSequence::new(64, 64, 25, vec![f; 5]).unwrap();
        let enc = encode(&v, &CodecConfig { gop_length: 5, q: 4, ..Default::default() }).unwrap();
        let (fields, counter) = extract_mv_fields(&enc).unwrap();
        assert_eq!(fields.len(), 4);
        let mut inter_mbs = 0u64;
        for field in &fields {
            assert!(field.grid.iter().all(|&mv| mv == (0.0, 0.0)));
            assert!(field.source.iter().all(|&s| s == MvSource::Inter));
            inter_mbs += (field.cols / 2 * field.rows / 2) as u64;
        }
        assert_eq!(counter.residual_bytes_read, 0);
        assert_eq!(counter.mv_bytes, 8 * inter_mbs);
    }

    #[test]
    fn translated_content_yields_negated_translation_mvs() {
        // Content moves right by 3; the MV points back into the reference,
        // so interior cells carry (-3, 0).
        let v = shifted_video(64, 64, 4, 3);
        let enc = encode(&v, &CodecConfig { gop_length: 10, q: 2, s: 8, ..Default::default() })
            .unwrap();
        let (fields, _) = extract_mv_fields(&enc).unwrap();
        for field in &fields {
            for row in 2..field.rows - 2 {
                for col in 2..field.cols - 2 {
                    assert_eq!(field.mv(col, row), (-3.0, 0.0), "cell ({col},{row})");
                    assert_eq!(field.flow(col, row), (3.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn fill_intra_identity_and_uniform_neighborhood() {
        let field = MotionVectorField {
            frame_index: 1,
            cols: 8,
            rows: 8,
            grid: vec![(3.0, 0.0); 64],
            source: vec![MvSource::Inter; 64],
        };
        assert_eq!(fill_intra(&field), field);

        // One Intra MB (2x2 cells) in the middle of a uniform field.
        let mut holed = field.clone();
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            holed.grid[r * 8 + c] = (0.0, 0.0);
            holed.source[r * 8 + c] = MvSource::Filled;
        }
        let filled = fill_intra(&holed);
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            assert_eq!(filled.mv(c, r), (3.0, 0.0));
        }
    }

    #[test]
    fn fill_intra_matches_direct_median() {
        // Checkerboard of (1,2) and (5,6) around a single hole at (1,1) on a
        // 3x3 grid: the hole sees four of each.
        let mut grid = Vec::new();
        let mut source = Vec::new();
        for i in 0..9 {
            if i == 4 {
                grid.push((0.0, 0.0));
                source.push(MvSource::Filled);
            } else if i % 2 == 0 {
                grid.push((1.0, 2.0));
                source.push(MvSource::Inter);
            } else {
                grid.push((5.0, 6.0));
                source.push(MvSource::Inter);
            }
        }
        let field = MotionVectorField { frame_index: 0, cols: 3, rows: 3, grid, source };
        let filled = fill_intra(&field);
        // Direct median: four 1s and four 5s -> (1+5)/2 = 3; same for dy.
        assert_eq!(filled.mv(1, 1), (3.0, 4.0));
    }

    #[test]
    fn fill_intra_all_holes_becomes_zero() {
        let field = MotionVectorField {
            frame_index: 0,
            cols: 4,
            rows: 4,
            grid: vec![(7.0, 7.0); 16],
            source: vec![MvSource::Filled; 16],
        };
        let filled = fill_intra(&field);
        assert!(filled.grid.iter().all(|&mv| mv == (0.0, 0.0)));
    }

    #[test]
    fn interpolate_identity_uniform_and_ramp() {
        let uniform = MotionVectorField {
            frame_index: 0,
            cols: 4,
            rows: 4,
            grid: vec![(2.0, -1.0); 16],
            source: vec![MvSource::Inter; 16],
        };
        assert_eq!(interpolate_field(&uniform, 8).unwrap(), uniform);
        let fine = interpolate_field(&uniform, 4).unwrap();
        assert_eq!(fine.cols, 8);
        assert!(fine.grid.iter().all(|&mv| mv == (2.0, -1.0)));
        assert!(interpolate_field(&uniform, 2).is_err());

        // Linear ramp in dx: interpolated centers must stay on the ramp.
        let mut ramp = uniform.clone();
        for row in 0..4 {
            for col in 0..4 {
                ramp.grid[row * 4 + col] = (col as f32, 0.0);
            }
        }
        let fine = interpolate_field(&ramp, 4).unwrap();
        // Closed form: fine col j sits at coarse coordinate (j + 0.5)/2 - 0.5,
        // clamped to the ramp's support.
        for row in 0..8 {
            for col in 0..8 {
                let u = ((col as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, 3.0);
                let got = fine.mv(col, row).0;
                assert!((got - u).abs() < 1e-6, "col {col}: {got} vs {u}");
            }
        }
    }

    #[test]
    fn activity_threshold_is_strict() {
        let mut field = MotionVectorField {
            frame_index: 0,
            cols: 4,
            rows: 4,
            grid: vec![(0.0, 0.0); 16],
            source: vec![MvSource::Inter; 16],
        };
        assert!(activity_map(&field, 0.0).active.iter().all(|&a| !a));
        field.grid.iter_mut().for_each(|mv| *mv = (1.0, 0.0));
        assert!(activity_map(&field, 0.0).active.iter().all(|&a| a));
        assert!(activity_map(&field, 1.0).active.iter().all(|&a| !a));
        // Intra holes stay active regardless.
        field.source[0] = MvSource::Filled;
        assert!(activity_map(&field, 1.0).active[0]);
    }

    #[test]
    fn selective_decode_x1_equals_full_decode() {
        let v = shifted_video(64, 64, 6, 2);
        let enc = encode(&v, &CodecConfig { gop_length: 3, q: 4, ..Default::default() }).unwrap();
        let full = crate::codec::decode(&enc).unwrap();
        let (rendered, _) =
            selective_decode(&enc, &SelectiveDecodeConfig { x: 1, r: 1, a: 0.0 }).unwrap();
        assert_eq!(rendered.len(), 6);
        for (idx, frame) in &rendered {
            assert_eq!(frame, &full.frames[*idx]);
        }
    }

    #[test]
    fn selective_decode_static_video_never_moves_the_canvas() {
        let f = textured_frame(64, 64, 0);
        let v = VideoSequence::new(64, 64, 25, vec![f; 10]).unwrap();
        let enc = encode(&v, &CodecConfig { gop_length: 10, q: 5, ..Default::default() }).unwrap();
        let (rendered, counter) =
            selective_decode(&enc, &SelectiveDecodeConfig { x: X_INF, r: 2, a: 0.0 }).unwrap();
        assert_eq!(rendered.len(), 5); // frames 0, 2, 4, 6, 8
        for (_, frame) in &rendered {
            assert_eq!(frame, &rendered[0].1);
        }
        assert!(counter.residual_bytes_skipped > 0);
    }

    #[test]
    fn selective_decode_rejects_r_above_x() {
        let f = textured_frame(32, 32, 0);
        let v = VideoSequence::new(32, 32, 25, vec![f; 3]).unwrap();
        let enc = encode(&v, &CodecConfig::default()).unwrap();
        let err =
            selective_decode(&enc, &SelectiveDecodeConfig { x: 5, r: 10, a: 0.0 }).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn canvas_causality_under_truncation() {
        let v = shifted_video(64, 64, 8, 2);
        let cfg = CodecConfig { gop_length: 8, q: 4, ..Default::default() };
        let enc = encode(&v, &cfg).unwrap();
        let full_cfg = SelectiveDecodeConfig { x: X_INF, r: 1, a: 0.0 };
        let (all, _) = selective_decode(&enc, &full_cfg).unwrap();

        // Truncate after frame 4 by re-encoding the prefix; rendered frames
        // up to the cut must be identical.
        let prefix = VideoSequence::new(64, 64, 25, v.frames[..5].to_vec()).unwrap();
        let enc_prefix = encode(&prefix, &cfg).unwrap();
        let (head, _) = selective_decode(&enc_prefix, &full_cfg).unwrap();
        for i in 0..5 {
            assert_eq!(all[i], head[i]);
        }
    }

    #[test]
    fn mvf_dump_layout() {
        let field = MotionVectorField {
            frame_index: 1,
            cols: 2,
            rows: 1,
            grid: vec![(3.0, -2.0), (0.0, 1.0)],
            source: vec![MvSource::Inter; 2],
        };
        let mut buf = Vec::new();
        write_mvf(&[field], &mut buf).unwrap();
        assert_eq!(&buf[0..4], b"MVF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(buf[8..10].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(buf[10..12].try_into().unwrap()), 1);
        assert_eq!(i16::from_le_bytes(buf[12..14].try_into().unwrap()), 3);
        assert_eq!(i16::from_le_bytes(buf[14..16].try_into().unwrap()), -2);
    }
}
