//! CKP1 checkpoints: a canonical JSON echo of the network config followed by
//! length-prefixed f32 parameter blobs in layer order.

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

pub const CKP_MAGIC: &[u8; 4] = b"CKP1";

pub fn save_checkpoint<W: Write>(net: &Network, w: &mut W) -> Result<()> {
    let config = serde_json::to_string(&net.config)
        .map_err(|e| Error::InvalidInput(format!("config serialization: {e}")))?;
    w.write_all(CKP_MAGIC)?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;
    w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        w.write_all(&[layer.params.len() as u8])?;
        for p in &layer.params {
            w.write_all(&(p.numel() as u32).to_le_bytes())?;
            for &v in &p.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(r: &mut R) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKP_MAGIC {
        return Err(Error::Parse { offset: 0, msg: "bad CKP1 magic".into() });
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let config_len = u32::from_le_bytes(b4) as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config: NetworkConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| Error::Parse { offset: 8, msg: format!("config echo: {e}") })?;
    // Build for the layer/parameter skeleton, then overwrite every value.
    let mut net = Network::build(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) as usize != net.layers.len() {
        return Err(Error::CorruptStream("layer count does not match the config".into()));
    }
    let mut b1 = [0u8; 1];
    for layer in &mut net.layers {
        r.read_exact(&mut b1)?;
        if b1[0] as usize != layer.params.len() {
            return Err(Error::CorruptStream("parameter count does not match the config".into()));
        }
        for p in &mut layer.params {
            r.read_exact(&mut b4)?;
            let n = u32::from_le_bytes(b4) as usize;
            if n != p.numel() {
                return Err(Error::CorruptStream(format!(
                    "blob of {n} values for a {:?} parameter",
                    p.shape
                )));
            }
            for v in &mut p.data {
                r.read_exact(&mut b4)?;
                *v = f32::from_le_bytes(b4) as f64;
            }
        }
    }
    Ok(net)
}

/// Copies every parameter tensor whose shape matches from `src` into `dst`
/// (position-wise over layers); mismatched tensors keep their fresh
/// initialization. Returns how many tensors were copied. This is the
/// fine-tuning path: a head with a different class count stays fresh.
pub fn transfer_weights(dst: &mut Network, src: &Network) -> usize {
    let mut copied = 0;
    for (d, s) in dst.layers.iter_mut().zip(&src.layers) {
        for (dp, sp) in d.params.iter_mut().zip(&s.params) {
            if dp.shape == sp.shape {
                dp.data.clone_from(&sp.data);
                copied += 1;
            }
        }
    }
    copied
}
