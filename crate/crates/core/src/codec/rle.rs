//! Run-length coding of quantized residual levels.
//!
//! Token stream per channel block: `(u8 run, i16 level)` emits `run` zero
//! samples followed by `level`. `(255, 0)` terminates the block, the
//! remaining samples are zero. A run of more than 254 zeros before a nonzero
//! level is split with `(254, 0)` tokens, each standing for 255 zeros.

use super::bytes::{ByteClass, ByteWriter, CountingCursor};
use crate::error::{Error, Result};

pub const TERMINATOR_RUN: u8 = 255;

/// Encodes one channel block of levels.
pub fn encode_block(levels: &[i16], w: &mut ByteWriter) {
    let n = levels.len();
    let mut i = 0;
    while i < n {
        let mut z = 0;
        while i + z < n && levels[i + z] == 0 {
            z += 1;
        }
        if i + z == n {
            w.put_u8(TERMINATOR_RUN);
            w.put_i16(0);
            break;
        }
        let level = levels[i + z];
        i += z + 1;
        while z > 254 {
            w.put_u8(254);
            w.put_i16(0);
            z -= 255;
        }
        w.put_u8(z as u8);
        w.put_i16(level);
    }
}

/// Decodes one channel block of exactly `n` levels.
pub fn decode_block(cur: &mut CountingCursor, n: usize) -> Result<Vec<i16>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let run = cur.read_u8(ByteClass::Residual)?;
        let level = cur.read_i16(ByteClass::Residual)?;
        if run == TERMINATOR_RUN && level == 0 {
            out.resize(n, 0);
            break;
        }
        if out.len() + run as usize + 1 > n {
            return Err(Error::CorruptStream(format!(
                "RLE run overflows the block: {} samples emitted, run {run}",
                out.len()
            )));
        }
        out.resize(out.len() + run as usize, 0);
        out.push(level);
    }
    Ok(out)
}
