use std::path::Path;

use crate::error::{Error, Result};
use crate::types::DType;

#[derive(Clone, Debug, PartialEq)]
pub enum Buffer {
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Buffer {
    pub fn zeros(dtype: DType, len: usize) -> Buffer {
        match dtype {
            DType::I32 => Buffer::I32(vec![0; len]),
            DType::F32 => Buffer::F32(vec![0.0; len]),
            DType::F64 => Buffer::F64(vec![0.0; len]),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            Buffer::I32(_) => DType::I32,
            Buffer::F32(_) => DType::F32,
            Buffer::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::I32(v) => v.len(),
            Buffer::F32(v) => v.len(),
            Buffer::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` widened to `f64`.
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            Buffer::I32(v) => v[i] as f64,
            Buffer::F32(v) => v[i] as f64,
            Buffer::F64(v) => v[i],
        }
    }

    /// Whether both buffers hold the same dtype and identical bits.
    pub fn bitwise_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::I32(a), Buffer::I32(b)) => a == b,
            (Buffer::F32(a), Buffer::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::F64(a), Buffer::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// An array in memory order together with its logical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayData {
    pub shape: Vec<usize>,
    pub data: Buffer,
}

impl ArrayData {
    pub fn new(shape: Vec<usize>, data: Buffer) -> Self {
        ArrayData { shape, data }
    }

    pub fn scalar_f64(v: f64) -> Self {
        ArrayData::new(Vec::new(), Buffer::F64(vec![v]))
    }

    pub fn f64(shape: Vec<usize>, v: Vec<f64>) -> Self {
        ArrayData::new(shape, Buffer::F64(v))
    }

    pub fn f32(shape: Vec<usize>, v: Vec<f32>) -> Self {
        ArrayData::new(shape, Buffer::F32(v))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Little-endian: dtype code (u32), rank (u32), each extent (u64), data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.dtype().code().to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &n in &self.shape {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        match &self.data {
            Buffer::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Buffer::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Buffer::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Io(format!("malformed array data: {msg}"));
        let u32_at = |at: usize| -> Result<u32> {
            let b = bytes.get(at..at + 4).ok_or_else(|| bad("truncated header"))?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
        };
        let dtype = DType::from_code(u32_at(0)?).ok_or_else(|| bad("unknown dtype code"))?;
        let rank = u32_at(4)? as usize;
        let mut pos = 8;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let b = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize);
            pos += 8;
        }
        let n: usize = shape.iter().product();
        let width = if dtype == DType::F64 { 8 } else { 4 };
        let body = &bytes[pos..];
        if body.len() != n * width {
            return Err(bad(&format!("expected {} data bytes, found {}", n * width, body.len())));
        }
        let data = match dtype {
            DType::I32 => Buffer::I32(body.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F32 => Buffer::F32(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F64 => Buffer::F64(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        Ok(ArrayData { shape, data })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let a = ArrayData::f64(vec![2, 3], vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]);
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 4 + 4 + 16 + 48);
        assert_eq!(ArrayData::from_bytes(&bytes).unwrap(), a);
        let i = ArrayData::new(vec![2], Buffer::I32(vec![7, -1]));
        assert_eq!(ArrayData::from_bytes(&i.to_bytes()).unwrap(), i);
        assert!(ArrayData::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
