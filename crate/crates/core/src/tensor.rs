//! Dense row-major tensors and the TNS1 interchange format.
//!
//! Computation runs in f64 so finite-difference gradient checks have
//! headroom; the on-disk format stores f32.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const TNS_MAGIC: &[u8; 4] = b"TNS1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Flat offset for rank-3 [d0, d1, d2] indexing.
    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    /// Flat offset for rank-4 [d0, d1, d2, d3] indexing.
    #[inline]
    pub fn at4(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.shape[1] + j) * self.shape[2] + k) * self.shape[3] + l
    }

    pub fn write_tns<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.shape.len() > u8::MAX as usize {
            return Err(Error::InvalidInput("rank exceeds 255".into()));
        }
        w.write_all(TNS_MAGIC)?;
        w.write_all(&[self.shape.len() as u8])?;
        for &e in &self.shape {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_tns<R: Read>(r: &mut R) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TNS_MAGIC {
            return Err(Error::Parse { offset: 0, msg: "bad TNS1 magic".into() });
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        let mut b4 = [0u8; 4];
        for _ in 0..rank[0] {
            r.read_exact(&mut b4)?;
            shape.push(u32::from_le_bytes(b4) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            data.push(f32::from_le_bytes(b4) as f64);
        }
        Ok(Tensor { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tns_round_trip_and_layout() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut buf = Vec::new();
        t.write_tns(&mut buf).unwrap();
        // magic + rank + two u32 extents + six f32.
        assert_eq!(buf.len(), 4 + 1 + 8 + 24);
        assert_eq!(&buf[..5], b"TNS1\x02");
        assert_eq!(u32::from_le_bytes(buf[5..9].try_into().unwrap()), 2);
        let back = Tensor::read_tns(&mut &buf[..]).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.at3(1, 2, 3), 23);
        let t4 = Tensor::zeros(&[2, 3, 4, 5]);
        assert_eq!(t4.at4(1, 2, 3, 4), ((1 * 3 + 2) * 4 + 3) * 5 + 4);
    }
}
