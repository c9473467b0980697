//! Versioned JSON checkpoints with an embedded content checksum.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{InputScale, LayerSpec, MlpNetwork};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Provenance recorded alongside the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub problem: String,
    /// `teacher` or `student`.
    pub role: String,
    pub recipe: Option<String>,
    pub iterations: usize,
    pub best_iteration: Option<usize>,
    pub best_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: LayerSpec,
    pub input_scale: InputScale,
    /// Per layer, rows of the weight matrix.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub rng_seed: u64,
    pub training_meta: TrainingMeta,
    /// Hex sha256 of this document serialized with an empty checksum.
    #[serde(default)]
    pub checksum: String,
}

impl Checkpoint {
    pub fn from_network(net: &MlpNetwork, rng_seed: u64, training_meta: TrainingMeta) -> Self {
        let weights = net
            .weights()
            .iter()
            .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect();
        let biases = net.biases().iter().map(|b| b.to_vec()).collect();
        let mut ckpt = Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec: net.spec().clone(),
            input_scale: net.input_scale().clone(),
            weights,
            biases,
            rng_seed,
            training_meta,
            checksum: String::new(),
        };
        ckpt.checksum = ckpt.compute_checksum().expect("checkpoint serializes");
        ckpt
    }

    pub fn network(&self) -> Result<MlpNetwork> {
        let mut weights = Vec::with_capacity(self.weights.len());
        for (l, rows) in self.weights.iter().enumerate() {
            let n_rows = rows.len();
            let n_cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != n_cols) {
                return Err(Error::Shape(format!("ragged weight matrix in layer {l}")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let w = Array2::from_shape_vec((n_rows, n_cols), flat)
                .map_err(|e| Error::Shape(e.to_string()))?;
            weights.push(w);
        }
        let biases = self
            .biases
            .iter()
            .map(|b| Array1::from(b.clone()))
            .collect();
        MlpNetwork::from_parts(self.spec.clone(), self.input_scale.clone(), weights, biases)
    }

    pub fn compute_checksum(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.checksum.clear();
        let bytes = serde_json::to_vec(&blank)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads and verifies a checkpoint; a checksum mismatch is an error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint format {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        let computed = ckpt.compute_checksum()?;
        if computed != ckpt.checksum {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
                stored: ckpt.checksum.clone(),
                computed,
            });
        }
        Ok(ckpt)
    }
}

/// Hex sha256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Activation;
    use ndarray::Array;

    fn sample_net() -> MlpNetwork {
        let spec = LayerSpec::new(vec![2, 7, 5, 1], Activation::Silu).unwrap();
        let scale = InputScale::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap();
        let mut net = MlpNetwork::init_xavier(spec, scale, 17).unwrap();
        let p: Vec<f64> = net.params().iter().map(|x| x + 1e-3 / 3.0).collect();
        net.set_params(&p).unwrap();
        net
    }

    #[test]
    fn round_trip_reproduces_forward() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        Checkpoint::from_network(&net, 17, TrainingMeta::default())
            .save(&path)
            .unwrap();
        let back = Checkpoint::load(&path).unwrap().network().unwrap();
        let x = Array::from_shape_fn((50, 2), |(i, j)| 0.4 + 0.03 * i as f64 + 0.2 * j as f64);
        let a = net.forward(x.view()).unwrap();
        let b = back.forward(x.view()).unwrap();
        let max = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12);
        assert_eq!(net.params(), back.params());
    }

    #[test]
    fn tampered_file_is_refused() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        Checkpoint::from_network(&net, 1, TrainingMeta::default())
            .save(&path)
            .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"rng_seed\": 1", "\"rng_seed\": 2", 1);
        assert_ne!(text, tampered);
        fs::write(&path, tampered).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checksum { .. })
        ));
    }
}
