use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

const FORMAT: &str = "taskalloc-params/1";

/// One stored parameter; `data` is base64 of little-endian f64 bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

/// JSON manifest of named parameters plus free-form metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            format: FORMAT.to_string(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, name: &str, t: &Tensor) {
        let mut bytes = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.tensors.retain(|n| n.name != name);
        self.tensors.push(NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: STANDARD.encode(bytes),
        });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|n| n.name == name)
    }

    pub fn get(&self, name: &str) -> Result<Tensor, TensorError> {
        let nt = self
            .tensors
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor {name}")))?;
        let bytes = STANDARD
            .decode(&nt.data)
            .map_err(|e| TensorError::Checkpoint(format!("{name}: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(TensorError::Checkpoint(format!("{name}: truncated data")));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(nt.shape.clone(), data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TensorError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(TensorError::Checkpoint(format!("unknown format {:?}", c.format)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor::matrix(2, 3, vec![0.1, -1e-300, 1.0 / 3.0, f64::MIN_POSITIVE, 12345.678, -0.0]).unwrap();
        let mut c = Checkpoint::new();
        c.insert("w", &t);
        c.meta.insert("n_max".into(), 4.into());
        let back = Checkpoint::from_json(&c.to_json()).unwrap();
        let u = back.get("w").unwrap();
        assert_eq!(u.shape(), t.shape());
        for (a, b) in t.data().iter().zip(u.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.meta["n_max"], 4);
        assert!(back.get("missing").is_err());
    }

    #[test]
    fn wrong_format_rejected() {
        assert!(Checkpoint::from_json(r#"{"format":"other","meta":{},"tensors":[]}"#).is_err());
    }
}
