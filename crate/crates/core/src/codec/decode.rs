//! Full-stream and random-access decoding.

use super::{
    parse_frame_preamble, parse_header, parse_mb_preamble, parse_mb_residual, reconstruct_mb,
    ByteAccessCounter, CountingCursor, EncodedVideo, FrameType, MacroblockRecord,
};
use crate::error::{Error, Result};
use crate::video::{Frame, VideoSequence};

/// Decodes one frame payload into `recon`, reading from the cursor.
fn decode_frame_payload(
    cur: &mut CountingCursor,
    header: &super::StreamHeader,
    frame_type: FrameType,
    reference: Option<&Frame>,
    recon: &mut Frame,
) -> Result<()> {
    let q = header.q as i32;
    for mby in 0..header.mb_rows() {
        for mbx in 0..header.mb_cols() {
            let (mode, mvs, rlen) = parse_mb_preamble(cur)?;
            if frame_type == FrameType::I && mode != super::MbMode::Intra {
                return Err(Error::CorruptStream("Inter MB inside an I-frame".into()));
            }
            let levels = parse_mb_residual(cur, rlen)?;
            let rec = MacroblockRecord { mode, mvs, levels };
            reconstruct_mb(recon, reference, mbx, mby, &rec, q);
        }
    }
    Ok(())
}

/// Decodes the full sequence.
pub fn decode(bitstream: &EncodedVideo) -> Result<VideoSequence> {
    let mut cur = bitstream.cursor();
    let header = parse_header(&mut cur)?;
    let mut frames: Vec<Frame> = Vec::with_capacity(header.frame_count);
    for idx in 0..header.frame_count {
        let (frame_type, _len) = parse_frame_preamble(&mut cur)?;
        if frame_type != header.frame_type(idx) {
            return Err(Error::CorruptStream(format!(
                "frame {idx} has type {frame_type:?} but the GOP structure says {:?}",
                header.frame_type(idx)
            )));
        }
        let mut recon = Frame::new(header.width, header.height);
        decode_frame_payload(&mut cur, &header, frame_type, frames.last(), &mut recon)?;
        frames.push(recon);
    }
    VideoSequence::new(header.width, header.height, header.fps, frames)
}

/// Random access: decodes only frame `index`, starting from the nearest
/// preceding I-frame and skipping everything before it via the frame payload
/// lengths. Returns the byte-access tally alongside the frame.
pub fn decode_frame_counted(
    bitstream: &EncodedVideo,
    index: usize,
) -> Result<(Frame, ByteAccessCounter)> {
    let mut cur = bitstream.cursor();
    let header = parse_header(&mut cur)?;
    if index >= header.frame_count {
        return Err(Error::OutOfRange { index, count: header.frame_count });
    }
    let anchor = index - index % header.gop_length as usize;
    let mut reference: Option<Frame> = None;
    for idx in 0..=index {
        let (frame_type, len) = parse_frame_preamble(&mut cur)?;
        if idx < anchor {
            cur.skip_residual(len)?;
            continue;
        }
        let mut recon = Frame::new(header.width, header.height);
        decode_frame_payload(&mut cur, &header, frame_type, reference.as_ref(), &mut recon)?;
        reference = Some(recon);
    }
    Ok((reference.unwrap(), cur.counter))
}

/// [`decode_frame_counted`] without the counter.
pub fn decode_frame(bitstream: &EncodedVideo, index: usize) -> Result<Frame> {
    decode_frame_counted(bitstream, index).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, CodecConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_video(w: usize, h: usize, n: usize, seed: u64) -> VideoSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n)
            .map(|_| {
                let mut f = Frame::new(w, h);
                for p in &mut f.planes {
                    rng.fill(&mut p[..]);
                }
                f
            })
            .collect();
        VideoSequence::new(w, h, 25, frames).unwrap()
    }

    /// Noise constrained away from the clamp corners at 0 and 255.
    fn mid_noise_video(w: usize, h: usize, n: usize, seed: u64) -> VideoSequence {
        let mut v = noise_video(w, h, n, seed);
        for f in &mut v.frames {
            for p in &mut f.planes {
                for s in p.iter_mut() {
                    *s = 16 + *s % 224;
                }
            }
        }
        v
    }

    #[test]
    fn q1_round_trip_is_lossless() {
        let v = noise_video(32, 32, 5, 1);
        let enc = encode(&v, &CodecConfig { q: 1, gop_length: 3, ..Default::default() }).unwrap();
        let dec = decode(&enc).unwrap();
        assert_eq!(v, dec);
    }

    #[test]
    fn static_video_decodes_to_frame0_everywhere() {
        // Odd q: the intra reconstruction error stays strictly below q/2, so
        // every P residual quantizes to zero and the canvas never moves.
        // (With even q, a residual of exactly q/2 rounds away from zero and
        // oscillates; the half-away rule makes that unavoidable.)
        let mut f = Frame::new(48, 32);
        for (i, p) in f.planes.iter_mut().enumerate() {
            p.iter_mut().enumerate().for_each(|(j, s)| *s = ((i * 37 + j) % 256) as u8);
        }
        let v = VideoSequence::new(48, 32, 25, vec![f; 6]).unwrap();
        let enc = encode(&v, &CodecConfig { q: 5, gop_length: 6, ..Default::default() }).unwrap();
        let dec = decode(&enc).unwrap();
        for fr in &dec.frames {
            assert_eq!(fr, &dec.frames[0]);
        }
    }

    #[test]
    fn reencoding_the_decode_is_a_fixed_point() {
        for q in [1u8, 5] {
            let v = mid_noise_video(32, 32, 4, 2);
            let cfg = CodecConfig { q, gop_length: 2, ..Default::default() };
            let enc = encode(&v, &cfg).unwrap();
            let dec = decode(&enc).unwrap();
            let enc2 = encode(&dec, &cfg).unwrap();
            assert_eq!(enc.as_bytes(), enc2.as_bytes(), "q={q}");
        }
    }

    #[test]
    fn all_intra_stream_has_no_temporal_dependence() {
        let v = noise_video(32, 32, 4, 3);
        let enc = encode(&v, &CodecConfig { gop_length: 1, q: 2, ..Default::default() }).unwrap();
        let dec = decode(&enc).unwrap();
        // Independent oracle: decode each frame in isolation via random
        // access; an all-intra stream needs no reference frames.
        for i in 0..4 {
            let (f, counter) = decode_frame_counted(&enc, i).unwrap();
            assert_eq!(f, dec.frames[i]);
            if i > 0 {
                assert!(counter.residual_bytes_skipped > 0);
            }
        }
    }

    #[test]
    fn decode_frame_matches_full_decode() {
        let v = noise_video(48, 48, 9, 4);
        let enc = encode(&v, &CodecConfig { q: 8, gop_length: 4, ..Default::default() }).unwrap();
        let dec = decode(&enc).unwrap();
        for i in 0..9 {
            assert_eq!(decode_frame(&enc, i).unwrap(), dec.frames[i]);
        }
        assert!(matches!(
            decode_frame(&enc, 9),
            Err(Error::OutOfRange { index: 9, count: 9 })
        ));
    }

    #[test]
    fn i_frame_random_access_reads_no_ancestors() {
        let v = noise_video(32, 32, 9, 5);
        let enc = encode(&v, &CodecConfig { q: 8, gop_length: 4, ..Default::default() }).unwrap();
        // Frame 4 is an I-frame: everything before it is skipped, not read.
        let (_, c4) = decode_frame_counted(&enc, 4).unwrap();
        let (_, c5) = decode_frame_counted(&enc, 5).unwrap();
        assert!(c4.residual_bytes_skipped > 0);
        assert!(c4.residual_bytes_read < c5.residual_bytes_read);
        // Frame 0 needs no skipping at all.
        let (_, c0) = decode_frame_counted(&enc, 0).unwrap();
        assert_eq!(c0.residual_bytes_skipped, 0);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let v = noise_video(32, 32, 2, 6);
        let enc = encode(&v, &CodecConfig::default()).unwrap();
        let mut bytes = enc.as_bytes().to_vec();
        bytes.truncate(bytes.len() - 10);
        let truncated = EncodedVideo::from_bytes(bytes).unwrap();
        match decode(&truncated) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
