//! Binary checkpoints of velocity fields.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "FEXP1\n"
//! u32 layer count L
//! L × (u32 rows, u32 cols)          weight shapes, rows = fan-in
//! every weight matrix, row-major f64
//! every bias vector (length = cols), f64
//! u32 activation code
//! ```

use std::io::{Read, Write};
use std::path::Path;

use fexp_core::diffcore::Tensor;
use fexp_core::flowmodel::{Activation, Dense, VelocityField};
use thiserror::Error;

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 6] = b"FEXP1\n";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unknown activation code {0}")]
    UnknownActivation(u32),
    #[error("{0} trailing bytes after the activation code")]
    TrailingBytes(usize),
    #[error("inconsistent layer shapes: {0}")]
    Shape(String),
}

pub fn encode(field: &VelocityField) -> Vec<u8> {
    let layers = field.layers();
    let mut out = Vec::with_capacity(16 + 8 * field.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
    }
    for layer in layers {
        layer.weight.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    for layer in layers {
        layer.bias.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out.extend_from_slice(&field.activation().code().to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() < n {
            return Err(FormatError::Truncated(what));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(8).ok_or(FormatError::Truncated(what))?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<VelocityField, FormatError> {
    let mut cur = Cursor { bytes };
    if cur.take(MAGIC.len(), "magic").map_err(|_| FormatError::BadMagic)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let count = cur.u32("layer count")? as usize;
    if count == 0 {
        return Err(FormatError::Shape("zero layers".into()));
    }
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        shapes.push((cur.u32("layer rows")? as usize, cur.u32("layer cols")? as usize));
    }
    let mut weights = Vec::with_capacity(count);
    for &(r, c) in &shapes {
        weights.push(cur.f64s(r * c, "weights")?);
    }
    let mut biases = Vec::with_capacity(count);
    for &(_, c) in &shapes {
        biases.push(cur.f64s(c, "biases")?);
    }
    let code = cur.u32("activation code")?;
    let activation = Activation::from_code(code).ok_or(FormatError::UnknownActivation(code))?;
    if !cur.bytes.is_empty() {
        return Err(FormatError::TrailingBytes(cur.bytes.len()));
    }
    let layers = shapes
        .iter()
        .zip(weights)
        .zip(biases)
        .map(|((&(r, c), w), b)| {
            let weight = Tensor::matrix(r, c, w).map_err(|e| FormatError::Shape(e.to_string()))?;
            let bias = Tensor::matrix(1, c, b).map_err(|e| FormatError::Shape(e.to_string()))?;
            Ok(Dense { weight, bias })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    VelocityField::from_layers(layers, activation).map_err(|e| FormatError::Shape(e.to_string()))
}

pub fn save(field: &VelocityField, path: &Path) -> AppResult<()> {
    let mut file = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    file.write_all(&encode(field)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<VelocityField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| AppError::io(path, e))?;
    Ok(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fexp_core::flowmodel::Architecture;

    fn field() -> VelocityField {
        let arch = Architecture { dim: 2, hidden: vec![5, 3], activation: Activation::Tanh };
        VelocityField::init(&arch, 4)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = field();
        let bytes = encode(&f);
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        for (a, b) in f.params().iter().zip(back.params()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.activation(), Activation::Tanh);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&field());
        assert_eq!(&bytes[..6], b"FEXP1\n");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        // first layer maps (x, t) ∈ R³ to 5 hidden units
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 5);
        let params = 3 * 5 + 5 * 3 + 3 * 2 + 5 + 3 + 2;
        assert_eq!(bytes.len(), 6 + 4 + 3 * 8 + 8 * params + 4);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode(&field());
        assert!(matches!(decode(b"FEXP2\n"), Err(FormatError::BadMagic)));
        assert!(matches!(decode(&bytes[..3]), Err(FormatError::BadMagic)));
        assert!(matches!(decode(&bytes[..bytes.len() - 2]), Err(FormatError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(FormatError::TrailingBytes(1))));
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 4..].copy_from_slice(&77u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(FormatError::UnknownActivation(77))));
        let mut mismatched = bytes;
        // second layer claims 4 inputs while the first produces 5
        mismatched[18..22].copy_from_slice(&4u32.to_le_bytes());
        assert!(decode(&mismatched).is_err());
    }
}
