//! Encoder: exhaustive integer-pixel block matching on luma, per 8x8
//! partition, with a decoded-loop reference so the decoder reconstructs the
//! exact same samples.

use super::bytes::ByteWriter;
use super::{
    prediction_block, quantize, reconstruct_mb, write_header, write_mb_record, CodecConfig,
    EncodedVideo, MacroblockRecord, MbMode, StreamHeader, MB_SAMPLES, MB_SIZE, PARTITION_SIZE,
};
use crate::error::Result;
use crate::video::{Frame, VideoSequence};

/// Best (dx, dy, sad) for one 8x8 partition. Candidates are scanned in raster
/// order (dy outer, dx inner); ties prefer smaller |dy|, then smaller |dx|,
/// then the earlier candidate.
fn search_partition(
    cur: &[u8],
    reference: &[u8],
    width: usize,
    height: usize,
    px: usize,
    py: usize,
    s: i32,
) -> (i8, i8, u32) {
    let mut best = (0i8, 0i8, u32::MAX);
    for dy in -s..=s {
        let ry = py as i32 + dy;
        if ry < 0 || ry + PARTITION_SIZE as i32 > height as i32 {
            continue;
        }
        for dx in -s..=s {
            let rx = px as i32 + dx;
            if rx < 0 || rx + PARTITION_SIZE as i32 > width as i32 {
                continue;
            }
            let mut sad = 0u32;
            for y in 0..PARTITION_SIZE {
                let crow = (py + y) * width + px;
                let rrow = (ry as usize + y) * width + rx as usize;
                for x in 0..PARTITION_SIZE {
                    sad +=
                        (cur[crow + x] as i32 - reference[rrow + x] as i32).unsigned_abs();
                }
                if sad > best.2 {
                    break;
                }
            }
            let better = sad < best.2
                || (sad == best.2
                    && (dy.abs(), dx.abs()) < (best.1.abs() as i32, best.0.abs() as i32));
            if better {
                best = (dx as i8, dy as i8, sad);
            }
        }
    }
    best
}

/// Encodes a video sequence into an MVB1 bitstream. Deterministic: identical
/// inputs produce byte-identical streams.
pub fn encode(video: &VideoSequence, cfg: &CodecConfig) -> Result<EncodedVideo> {
    cfg.validate()?;
    let width = video.width;
    let height = video.height;
    let mb_cols = width / MB_SIZE;
    let mb_rows = height / MB_SIZE;
    let q = cfg.q as i32;

    let mut w = ByteWriter::default();
    write_header(
        &mut w,
        &StreamHeader {
            width,
            height,
            fps: video.fps,
            gop_length: cfg.gop_length,
            q: cfg.q,
            s: cfg.s,
            frame_count: video.frame_count(),
        },
    );

    let mut prev_decoded: Option<Frame> = None;
    for (idx, frame) in video.frames.iter().enumerate() {
        let is_intra_frame = idx % cfg.gop_length as usize == 0;
        let cur_luma = frame.luma_plane();
        let ref_luma = prev_decoded.as_ref().map(|f| f.luma_plane());

        let mut recon = Frame::new(width, height);
        let mut payload = ByteWriter::default();
        for mby in 0..mb_rows {
            for mbx in 0..mb_cols {
                let (mode, mvs) = if is_intra_frame {
                    (MbMode::Intra, [(0i8, 0i8); 4])
                } else {
                    let ref_luma = ref_luma.as_ref().unwrap();
                    let mut mvs = [(0i8, 0i8); 4];
                    let mut sad_sum = 0u32;
                    for p in 0..4 {
                        let px = mbx * MB_SIZE + (p % 2) * PARTITION_SIZE;
                        let py = mby * MB_SIZE + (p / 2) * PARTITION_SIZE;
                        let (dx, dy, sad) = search_partition(
                            &cur_luma,
                            ref_luma,
                            width,
                            height,
                            px,
                            py,
                            cfg.s as i32,
                        );
                        mvs[p] = (dx, dy);
                        sad_sum += sad;
                    }
                    if sad_sum > cfg.intra_sad_threshold {
                        (MbMode::Intra, [(0i8, 0i8); 4])
                    } else {
                        (MbMode::Inter, mvs)
                    }
                };

                let mut levels =
                    [vec![0i16; MB_SAMPLES], vec![0i16; MB_SAMPLES], vec![0i16; MB_SAMPLES]];
                for plane in 0..3 {
                    let pred = prediction_block(
                        &recon,
                        prev_decoded.as_ref(),
                        mbx,
                        mby,
                        mode,
                        &mvs,
                        plane,
                    );
                    for y in 0..MB_SIZE {
                        for x in 0..MB_SIZE {
                            let i = y * MB_SIZE + x;
                            let src = frame.sample(plane, mbx * MB_SIZE + x, mby * MB_SIZE + y);
                            levels[plane][i] = quantize(src as i32 - pred[i] as i32, q);
                        }
                    }
                }
                let rec = MacroblockRecord { mode, mvs, levels };
                reconstruct_mb(&mut recon, prev_decoded.as_ref(), mbx, mby, &rec, q);
                write_mb_record(&rec, &mut payload);
            }
        }

        w.put_u8(if is_intra_frame { 0 } else { 1 });
        w.put_u32(payload.buf.len() as u32);
        w.buf.extend_from_slice(&payload.buf);
        prev_decoded = Some(recon);
    }

    EncodedVideo::from_bytes(w.buf)
}
