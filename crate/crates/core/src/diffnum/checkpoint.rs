//! Named-tensor checkpoint container.
//!
//! JSON document, format tag `selfgrasp-tensors`, version 1:
//!
//! ```json
//! {"format": "selfgrasp-tensors", "version": 1,
//!  "tensors": [{"name": "trunk.0.weight", "shape": [8, 3, 5, 5], "values": [...]}]}
//! ```
//!
//! Values are row-major and written with round-trip float formatting, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Sequential;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT: &str = "selfgrasp-tensors";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        });
    }

    pub fn push_raw(&mut self, name: impl Into<String>, values: &[f64]) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: vec![values.len().max(1)],
            values: if values.is_empty() { vec![0.0] } else { values.to_vec() },
        });
    }

    /// Add every parameter of `net` under `prefix.`.
    pub fn push_network(&mut self, prefix: &str, net: &Sequential) {
        for (name, p) in net.named_params() {
            self.push(format!("{prefix}.{name}"), p);
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Overwrite the parameters of `net` from tensors named `prefix.*`.
    pub fn load_network(&self, prefix: &str, net: &mut Sequential) -> Result<()> {
        let index: BTreeMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(net.params_mut()) {
            let key = format!("{prefix}.{name}");
            let t = index
                .get(key.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape != p.shape() || t.values.len() != p.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {key}: checkpoint shape {:?}, network shape {:?}",
                    t.shape,
                    p.shape()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {key} has non-finite values")));
            }
            p.data_mut().copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        for t in &ck.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} declares shape {:?} but holds {} values",
                    t.name,
                    t.shape,
                    t.values.len()
                )));
            }
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnum::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [LayerSpec::conv(1, 2), LayerSpec::Relu, LayerSpec::dense(2 * 4 * 4, 3)];
        let net = Sequential::new(&[1, 6, 6], &specs, &mut rng).unwrap();
        let mut ck = Checkpoint::new();
        ck.push_network("net", &net);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();

        let mut other = Sequential::new(&[1, 6, 6], &specs, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        Checkpoint::load(&path).unwrap().load_network("net", &mut other).unwrap();
        for ((_, a), (_, b)) in net.named_params().iter().zip(other.named_params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn corrupt_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"format\": \"selfgrasp-tensors\", \"version\": 1, \"tensors\": [{\"name\": \"a\", \"shape\": [3], \"values\": [1.0]}]}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
