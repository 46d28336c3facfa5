//! Parameter serialization.
//!
//! A checkpoint file is a text header followed by binary payloads. Each
//! header line is `name TAB d0 d1 …`; an empty line ends the header. After
//! it come the tensors' values as little-endian 64-bit floats, one tensor
//! after another in header order, row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn push<F: Scalar>(&mut self, name: &str, shape: &[usize], data: &[F]) {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor {name} shape/data mismatch"
        );
        assert!(
            !name.is_empty() && !name.chars().any(|c| c.is_whitespace()),
            "tensor name {name:?} must be non-empty without whitespace"
        );
        assert!(
            self.tensors.iter().all(|t| t.name != name),
            "duplicate tensor {name}"
        );
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: data.iter().map(|&v| v.as_f64()).collect(),
        });
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no tensor {name:?}")))
    }

    /// Fetches a tensor, checking its shape, and converts to the scalar in
    /// use.
    pub fn take<F: Scalar>(&self, name: &str, shape: &[usize]) -> Result<Vec<F>> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::DimMismatch(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.data.iter().map(|&v| F::from_f64(v)).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for t in &self.tensors {
            out.extend_from_slice(t.name.as_bytes());
            for d in &t.shape {
                out.push(b'\t');
                out.extend_from_slice(d.to_string().as_bytes());
            }
            out.push(b'\n');
        }
        out.push(b'\n');
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let header_end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::Parse("checkpoint header is not terminated".into()))?;
        let header = std::str::from_utf8(&bytes[..header_end])
            .map_err(|_| Error::Parse("checkpoint header is not UTF-8".into()))?;
        let mut tensors = Vec::new();
        for line in header.lines() {
            let mut fields = line.split('\t');
            let name = fields
                .next()
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::Parse("checkpoint header line without a name".into()))?;
            let shape: Vec<usize> = fields
                .map(|f| {
                    f.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad dimension {f:?} for {name}")))
                })
                .collect::<Result<_>>()?;
            tensors.push(Tensor {
                name: name.to_string(),
                shape,
                data: Vec::new(),
            });
        }
        let mut payload = &bytes[header_end + 2..];
        for t in &mut tensors {
            let n = t.len();
            if payload.len() < n * 8 {
                return Err(Error::Parse(format!(
                    "checkpoint payload too short for tensor {}",
                    t.name
                )));
            }
            t.data = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            payload = &payload[n * 8..];
        }
        if !payload.is_empty() {
            return Err(Error::Parse(format!(
                "checkpoint payload has {} trailing bytes",
                payload.len()
            )));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut cp = Checkpoint::new();
        cp.push("enc/w1", &[2, 3], &[0.1f64, -0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 7e300, -0.0]);
        cp.push("enc/b1", &[2], &[1.5f64, -2.5]);
        let bytes = cp.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(cp, back);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_is_readable_text() {
        let mut cp = Checkpoint::new();
        cp.push("emb", &[4, 2], &[0.0f64; 8]);
        let bytes = cp.to_bytes();
        let text = std::str::from_utf8(&bytes[..bytes.len() - 64]).unwrap();
        assert_eq!(text, "emb\t4\t2\n\n");
    }

    #[test]
    fn take_checks_shape() {
        let mut cp = Checkpoint::new();
        cp.push("w", &[2, 2], &[1.0f64, 2.0, 3.0, 4.0]);
        assert!(cp.take::<f64>("w", &[2, 2]).is_ok());
        assert!(cp.take::<f64>("w", &[4]).is_err());
        assert!(cp.take::<f64>("missing", &[2, 2]).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut cp = Checkpoint::new();
        cp.push("w", &[3], &[1.0f64, 2.0, 3.0]);
        let mut bytes = cp.to_bytes();
        bytes.truncate(bytes.len() - 1);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut cp = Checkpoint::new();
        cp.push("w", &[2], &[0.25f32, -0.75]);
        cp.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.take::<f32>("w", &[2]).unwrap(), vec![0.25f32, -0.75]);
    }
}
