//! Raw video frames and the pixel-domain helpers shared by the codec and the
//! classifier pipeline.
//!
//! Frames are planar RGB, 8 bits per sample, raster order. Dimensions must be
//! multiples of 16 so every frame tiles exactly into macroblocks.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// One RGB frame as three planes (R, G, B), each `width * height` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<u8>; 3],
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Frame {
        Frame {
            width,
            height,
            planes: [
                vec![0u8; width * height],
                vec![0u8; width * height],
                vec![0u8; width * height],
            ],
        }
    }

    #[inline]
    pub fn sample(&self, plane: usize, x: usize, y: usize) -> u8 {
        self.planes[plane][y * self.width + x]
    }

    #[inline]
    pub fn set_sample(&mut self, plane: usize, x: usize, y: usize, v: u8) {
        self.planes[plane][y * self.width + x] = v;
    }

    /// BT.601 luma, integer arithmetic with round-half-up so both the encoder
    /// and any oracle compute the same plane.
    pub fn luma_plane(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = vec![0u8; n];
        for i in 0..n {
            out[i] = luma(self.planes[0][i], self.planes[1][i], self.planes[2][i]);
        }
        out
    }
}

/// BT.601 luma of one RGB sample.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// An uncompressed sequence of RGB frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSequence {
    pub width: usize,
    pub height: usize,
    pub fps: u8,
    pub frames: Vec<Frame>,
}

impl VideoSequence {
    /// Builds a sequence, checking the dimension invariants.
    pub fn new(width: usize, height: usize, fps: u8, frames: Vec<Frame>) -> Result<VideoSequence> {
        if width == 0 || height == 0 || width % 16 != 0 || height % 16 != 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive multiples of 16, got {width}x{height}"
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.width != width || f.height != height {
                return Err(Error::InvalidInput(format!(
                    "frame {i} is {}x{} but the sequence is {width}x{height}",
                    f.width, f.height
                )));
            }
        }
        Ok(VideoSequence { width, height, fps, frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Writes raw planar RGB: all frames back to back, R then G then B plane.
    pub fn write_raw<W: Write>(&self, w: &mut W) -> Result<()> {
        for f in &self.frames {
            for p in &f.planes {
                w.write_all(p)?;
            }
        }
        Ok(())
    }

    /// Reads raw planar RGB written by [`VideoSequence::write_raw`].
    pub fn read_raw<R: Read>(
        r: &mut R,
        width: usize,
        height: usize,
        fps: u8,
    ) -> Result<VideoSequence> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let frame_bytes = width * height * 3;
        if frame_bytes == 0 || buf.len() % frame_bytes != 0 {
            return Err(Error::InvalidInput(format!(
                "raw stream length {} is not a multiple of the frame size {frame_bytes}",
                buf.len()
            )));
        }
        let plane = width * height;
        let mut frames = Vec::with_capacity(buf.len() / frame_bytes);
        for chunk in buf.chunks_exact(frame_bytes) {
            frames.push(Frame {
                width,
                height,
                planes: [
                    chunk[0..plane].to_vec(),
                    chunk[plane..2 * plane].to_vec(),
                    chunk[2 * plane..3 * plane].to_vec(),
                ],
            });
        }
        VideoSequence::new(width, height, fps, frames)
    }
}

/// Writes a frame as binary PPM (P6).
pub fn write_ppm(frame: &Frame, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(frame.width * frame.height * 3 + 32);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", frame.width, frame.height).as_bytes());
    for i in 0..frame.width * frame.height {
        out.push(frame.planes[0][i]);
        out.push(frame.planes[1][i]);
        out.push(frame.planes[2][i]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a boolean map as binary PGM (P5), active cells white.
pub fn write_pgm_bool(map: &[bool], width: usize, height: usize, path: &Path) -> Result<()> {
    assert_eq!(map.len(), width * height);
    let mut out = Vec::with_capacity(map.len() + 32);
    out.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
    out.extend(map.iter().map(|&a| if a { 255u8 } else { 0u8 }));
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_multiple_of_16() {
        let err = VideoSequence::new(60, 64, 25, vec![]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn luma_is_bt601() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        // 0.299*255 = 76.245 -> 76
        assert_eq!(luma(255, 0, 0), 76);
        assert_eq!(luma(0, 255, 0), 150);
        assert_eq!(luma(0, 0, 255), 29);
    }

    #[test]
    fn raw_round_trip() {
        let mut f = Frame::new(16, 16);
        f.set_sample(0, 3, 4, 200);
        f.set_sample(2, 15, 15, 7);
        let v = VideoSequence::new(16, 16, 25, vec![f.clone(), f]).unwrap();
        let mut buf = Vec::new();
        v.write_raw(&mut buf).unwrap();
        let back = VideoSequence::read_raw(&mut &buf[..], 16, 16, 25).unwrap();
        assert_eq!(v, back);
    }
}
