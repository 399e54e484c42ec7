//! Minimal block-based motion-compensated codec.
//!
//! The bitstream ("MVB1") is laid out so that per-macroblock motion vectors
//! sit in front of a length-prefixed residual payload. A parser that only
//! wants motion can therefore skip every residual byte, which is what the
//! sensor layer builds on.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic "MVB1"
//! u16 width, u16 height, u8 fps, u16 gop_length, u8 q, u8 s, u32 frame_count
//! per frame:
//!   u8 frame_type (0 = I, 1 = P), u32 frame_payload_len
//!   MB records in raster order:
//!     u8 mode (0 = Intra, 1 = Inter)
//!     if Inter: 4 x (i8 dx, i8 dy), one pair per 8x8 partition
//!     u16 residual_len
//!     residual payload: 3 RLE channel blocks (see `rle`)
//! ```

mod bytes;
mod decode;
mod encode;
mod rle;

pub use bytes::{ByteAccessCounter, ByteClass, CountingCursor};
pub use decode::{decode, decode_frame, decode_frame_counted};
pub use encode::encode;

use crate::error::{Error, Result};
use crate::video::Frame;
use bytes::ByteWriter;
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"MVB1";
pub const MB_SIZE: usize = 16;
pub const PARTITION_SIZE: usize = 8;
/// Number of samples in one macroblock channel block.
pub const MB_SAMPLES: usize = MB_SIZE * MB_SIZE;

/// Encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Frames between I-frames; 1 means all-intra.
    pub gop_length: u16,
    /// Quantizer step; 1 is lossless.
    pub q: u8,
    /// Motion search range in pixels, 1..=127.
    pub s: u8,
    /// An MB whose summed best-partition luma SAD exceeds this becomes Intra.
    pub intra_sad_threshold: u32,
}

impl Default for CodecConfig {
    fn default() -> CodecConfig {
        CodecConfig {
            gop_length: 10,
            q: 4,
            s: 8,
            // Mean absolute luma error of 48 per sample over a 16x16 MB.
            intra_sad_threshold: (MB_SAMPLES as u32) * 48,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gop_length < 1 {
            return Err(Error::InvalidConfig("gop_length must be >= 1".into()));
        }
        if self.q < 1 {
            return Err(Error::InvalidConfig("quant step q must be >= 1".into()));
        }
        if self.s < 1 || self.s > 127 {
            return Err(Error::InvalidConfig(format!(
                "search range s must be in 1..=127, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    I,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbMode {
    Intra,
    Inter,
}

/// One parsed macroblock record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroblockRecord {
    pub mode: MbMode,
    /// One (dx, dy) pair per 8x8 partition, raster order; zero for Intra.
    pub mvs: [(i8, i8); 4],
    /// Quantized residual levels per channel, raster order in the MB.
    pub levels: [Vec<i16>; 3],
}

/// Stream header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: usize,
    pub height: usize,
    pub fps: u8,
    pub gop_length: u16,
    pub q: u8,
    pub s: u8,
    pub frame_count: usize,
}

impl StreamHeader {
    pub fn mb_cols(&self) -> usize {
        self.width / MB_SIZE
    }
    pub fn mb_rows(&self) -> usize {
        self.height / MB_SIZE
    }
    pub fn frame_type(&self, index: usize) -> FrameType {
        if index % self.gop_length as usize == 0 {
            FrameType::I
        } else {
            FrameType::P
        }
    }
}

/// A complete MVB1 bitstream, kept in serialized form so byte-level access
/// patterns can be measured on the real thing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedVideo {
    data: Vec<u8>,
}

impl EncodedVideo {
    pub fn from_bytes(data: Vec<u8>) -> Result<EncodedVideo> {
        let v = EncodedVideo { data };
        v.header()?;
        Ok(v)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn header(&self) -> Result<StreamHeader> {
        let mut cur = CountingCursor::new(&self.data);
        parse_header(&mut cur)
    }

    pub fn cursor(&self) -> CountingCursor<'_> {
        CountingCursor::new(&self.data)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, &self.data)?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<EncodedVideo> {
        EncodedVideo::from_bytes(std::fs::read(path)?)
    }
}

pub(crate) fn parse_header(cur: &mut CountingCursor) -> Result<StreamHeader> {
    let magic = cur.read_bytes(4, ByteClass::Header)?;
    if magic != MAGIC {
        return Err(Error::Parse { offset: 0, msg: "bad magic, not an MVB1 stream".into() });
    }
    let width = cur.read_u16(ByteClass::Header)? as usize;
    let height = cur.read_u16(ByteClass::Header)? as usize;
    let fps = cur.read_u8(ByteClass::Header)?;
    let gop_length = cur.read_u16(ByteClass::Header)?;
    let q = cur.read_u8(ByteClass::Header)?;
    let s = cur.read_u8(ByteClass::Header)?;
    let frame_count = cur.read_u32(ByteClass::Header)? as usize;
    if width == 0 || height == 0 || width % MB_SIZE != 0 || height % MB_SIZE != 0 {
        return Err(Error::CorruptStream(format!("bad dimensions {width}x{height}")));
    }
    if gop_length == 0 || q == 0 {
        return Err(Error::CorruptStream("gop_length and q must be nonzero".into()));
    }
    Ok(StreamHeader { width, height, fps, gop_length, q, s, frame_count })
}

pub(crate) fn write_header(w: &mut ByteWriter, h: &StreamHeader) {
    w.buf.extend_from_slice(&MAGIC);
    w.put_u16(h.width as u16);
    w.put_u16(h.height as u16);
    w.put_u8(h.fps);
    w.put_u16(h.gop_length);
    w.put_u8(h.q);
    w.put_u8(h.s);
    w.put_u32(h.frame_count as u32);
}

/// Per-frame preamble: type byte plus payload length.
pub(crate) fn parse_frame_preamble(cur: &mut CountingCursor) -> Result<(FrameType, usize)> {
    let t = match cur.read_u8(ByteClass::Header)? {
        0 => FrameType::I,
        1 => FrameType::P,
        other => {
            return Err(Error::Parse {
                offset: cur.position() - 1,
                msg: format!("unknown frame type {other}"),
            })
        }
    };
    let len = cur.read_u32(ByteClass::Header)? as usize;
    Ok((t, len))
}

/// Mode, motion vectors and residual length of the next MB record. Leaves the
/// cursor at the first residual byte.
pub(crate) fn parse_mb_preamble(
    cur: &mut CountingCursor,
) -> Result<(MbMode, [(i8, i8); 4], usize)> {
    let mode = match cur.read_u8(ByteClass::Header)? {
        0 => MbMode::Intra,
        1 => MbMode::Inter,
        other => {
            return Err(Error::Parse {
                offset: cur.position() - 1,
                msg: format!("unknown MB mode {other}"),
            })
        }
    };
    let mut mvs = [(0i8, 0i8); 4];
    if mode == MbMode::Inter {
        for mv in mvs.iter_mut() {
            mv.0 = cur.read_i8(ByteClass::Mv)?;
            mv.1 = cur.read_i8(ByteClass::Mv)?;
        }
    }
    let residual_len = cur.read_u16(ByteClass::Header)? as usize;
    Ok((mode, mvs, residual_len))
}

/// Reads the residual payload of an MB record as three channel blocks.
pub(crate) fn parse_mb_residual(
    cur: &mut CountingCursor,
    residual_len: usize,
) -> Result<[Vec<i16>; 3]> {
    let start = cur.position();
    let levels = [
        rle::decode_block(cur, MB_SAMPLES)?,
        rle::decode_block(cur, MB_SAMPLES)?,
        rle::decode_block(cur, MB_SAMPLES)?,
    ];
    let consumed = cur.position() - start;
    if consumed != residual_len {
        return Err(Error::CorruptStream(format!(
            "residual_len says {residual_len} bytes but the RLE blocks span {consumed}"
        )));
    }
    Ok(levels)
}

/// Serializes one MB record, returning the bytes.
pub(crate) fn write_mb_record(rec: &MacroblockRecord, w: &mut ByteWriter) {
    w.put_u8(match rec.mode {
        MbMode::Intra => 0,
        MbMode::Inter => 1,
    });
    if rec.mode == MbMode::Inter {
        for &(dx, dy) in &rec.mvs {
            w.put_i8(dx);
            w.put_i8(dy);
        }
    }
    let mut payload = ByteWriter::default();
    for ch in &rec.levels {
        rle::encode_block(ch, &mut payload);
    }
    w.put_u16(payload.buf.len() as u16);
    w.buf.extend_from_slice(&payload.buf);
}

/// Prediction for one channel of an MB: Inter predicts per partition from the
/// reference frame, Intra predicts the DC of already-reconstructed left and
/// top neighbor samples in `recon` (128 when there are none).
pub(crate) fn prediction_block(
    recon: &Frame,
    reference: Option<&Frame>,
    mbx: usize,
    mby: usize,
    mode: MbMode,
    mvs: &[(i8, i8); 4],
    plane: usize,
) -> [u8; MB_SAMPLES] {
    let mut out = [0u8; MB_SAMPLES];
    let x0 = mbx * MB_SIZE;
    let y0 = mby * MB_SIZE;
    match mode {
        MbMode::Inter => {
            let reference = reference.expect("Inter MB without a reference frame");
            for (p, &(dx, dy)) in mvs.iter().enumerate() {
                let px = x0 + (p % 2) * PARTITION_SIZE;
                let py = y0 + (p / 2) * PARTITION_SIZE;
                for y in 0..PARTITION_SIZE {
                    for x in 0..PARTITION_SIZE {
                        let rx = (px + x) as isize + dx as isize;
                        let ry = (py + y) as isize + dy as isize;
                        let v = reference.sample(plane, rx as usize, ry as usize);
                        out[(py - y0 + y) * MB_SIZE + (px - x0 + x)] = v;
                    }
                }
            }
        }
        MbMode::Intra => {
            let mut sum = 0u32;
            let mut count = 0u32;
            if mbx > 0 {
                for y in 0..MB_SIZE {
                    sum += recon.sample(plane, x0 - 1, y0 + y) as u32;
                    count += 1;
                }
            }
            if mby > 0 {
                for x in 0..MB_SIZE {
                    sum += recon.sample(plane, x0 + x, y0 - 1) as u32;
                    count += 1;
                }
            }
            let dc = if count == 0 { 128 } else { ((sum + count / 2) / count) as u8 };
            out = [dc; MB_SAMPLES];
        }
    }
    out
}

/// Quantized level with round-half-away-from-zero.
#[inline]
pub(crate) fn quantize(residual: i32, q: i32) -> i16 {
    let l = (2 * residual.abs() + q) / (2 * q);
    (if residual < 0 { -l } else { l }) as i16
}

/// Reconstructed sample from prediction and level.
#[inline]
pub(crate) fn dequantize(pred: u8, level: i16, q: i32) -> u8 {
    (pred as i32 + q * level as i32).clamp(0, 255) as u8
}

/// Writes the reconstruction of one MB into `recon`. Shared by the encoder's
/// decoded loop, the full decoder and the selective decoder.
pub(crate) fn reconstruct_mb(
    recon: &mut Frame,
    reference: Option<&Frame>,
    mbx: usize,
    mby: usize,
    rec: &MacroblockRecord,
    q: i32,
) {
    let x0 = mbx * MB_SIZE;
    let y0 = mby * MB_SIZE;
    for plane in 0..3 {
        let pred = prediction_block(recon, reference, mbx, mby, rec.mode, &rec.mvs, plane);
        for y in 0..MB_SIZE {
            for x in 0..MB_SIZE {
                let i = y * MB_SIZE + x;
                let v = dequantize(pred[i], rec.levels[plane][i], q);
                recon.set_sample(plane, x0 + x, y0 + y, v);
            }
        }
    }
}
