//! Binary checkpoint format.
//!
//! ```text
//! "TBCK" | version u16 | network count u16
//! per network: layer count u32
//!   per layer: rows u32 | cols u32 | rows·cols f64 weights (row-major) | rows f64 biases
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::Dense;
use crate::matrix::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TBCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(networks: &[&[Dense]]) -> Result<Vec<u8>> {
    let count = u16::try_from(networks.len())
        .map_err(|_| Error::Checkpoint("too many networks".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for layers in networks {
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in *layers {
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            for v in l.weight().as_slice().iter().chain(l.bias()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!("truncated file at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<Vec<Dense>>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("not a checkpoint (bad magic bytes)".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let count = r.u16()?;
    let mut networks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let layers = r.u32()?;
        let mut net = Vec::new();
        for _ in 0..layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let weight = Matrix::new(rows, cols, r.f64s(rows * cols)?)?;
            let bias = r.f64s(rows)?;
            net.push(Dense::new(weight, bias)?);
        }
        networks.push(net);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(networks)
}

pub fn save_checkpoint(path: impl AsRef<Path>, networks: &[&[Dense]]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(networks)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<Vec<Dense>>> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, MlpSpec};

    fn nets() -> (Mlp, Mlp) {
        (
            Mlp::init(&MlpSpec::new(3, vec![4], 2).unwrap(), 1).unwrap(),
            Mlp::init(&MlpSpec::linear(2, 5).unwrap(), 2).unwrap(),
        )
    }

    #[test]
    fn round_trip() {
        let (a, b) = nets();
        let bytes = encode_checkpoint(&[a.layers(), b.layers()]).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].as_slice(), a.layers());
        assert_eq!(back[1].as_slice(), b.layers());
        assert_eq!(&bytes[..4], b"TBCK");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
    }

    #[test]
    fn bad_magic_truncation_and_version() {
        let (a, _) = nets();
        let mut bytes = encode_checkpoint(&[a.layers()]).unwrap();
        let full = bytes.clone();
        assert!(decode_checkpoint(&full[..full.len() - 3])
            .unwrap_err()
            .to_string()
            .contains("truncated"));
        bytes[4] = 9;
        assert!(decode_checkpoint(&bytes).unwrap_err().to_string().contains("version"));
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes).unwrap_err().to_string().contains("magic"));
        let mut extra = full;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
