//! Versioned JSON format for trained quantile networks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::DenseNet;
use super::train::{QuantileNet, Standardization, TrainConfig};
use crate::error::{Error, Result};

pub const NET_FORMAT: &str = "gbc-quantile-net";
pub const NET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    standardization: Standardization,
    seed: u64,
    config: TrainConfig,
    feature_dim: usize,
}

impl QuantileNet {
    pub fn to_json(&self) -> Result<String> {
        let file = NetFile {
            format: NET_FORMAT.to_string(),
            version: NET_FORMAT_VERSION,
            layer_sizes: self.net.layer_sizes().to_vec(),
            weights: self.net.layers().iter().map(|l| l.weights.clone()).collect(),
            biases: self.net.layers().iter().map(|l| l.biases.clone()).collect(),
            standardization: self.standardization.clone(),
            seed: self.seed,
            config: self.config.clone(),
            feature_dim: self.feature_dim(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.format != NET_FORMAT {
            return Err(Error::Serialization(format!("unknown format tag {:?}", file.format)));
        }
        if file.version != NET_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported format version {} (expected {NET_FORMAT_VERSION})",
                file.version
            )));
        }
        let net = DenseNet::from_parts(&file.layer_sizes, file.weights, file.biases)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        let dim = net.input_dim();
        let st = &file.standardization;
        if file.feature_dim + 1 != dim || st.input_mean.len() != dim || st.input_scale.len() != dim {
            return Err(Error::Serialization("feature dimension does not match the network".into()));
        }
        Ok(Self {
            net,
            standardization: file.standardization,
            seed: file.seed,
            config: file.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?)
            .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::TauEncoding;

    fn sample() -> QuantileNet {
        QuantileNet {
            net: DenseNet::he_uniform(&[3, 7, 5, 1], 21).unwrap(),
            standardization: Standardization {
                input_mean: vec![0.1, -3.3, 0.5],
                input_scale: vec![1.0 / 3.0, 2.0, 0.2886751345948129],
                target_mean: std::f64::consts::PI,
                target_scale: 1e-7,
                degenerate_target: false,
                tau_encoding: TauEncoding::NormalScore,
            },
            seed: 77,
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let q = sample();
        let back = QuantileNet::from_json(&q.to_json().unwrap()).unwrap();
        assert_eq!(back, q);
        for tau in [0.01, 0.5, 0.99] {
            let f = [0.3, 1.7];
            assert_eq!(back.predict(&f, tau).unwrap(), q.predict(&f, tau).unwrap());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let q = sample();
        q.save(&path).unwrap();
        assert_eq!(QuantileNet::load(&path).unwrap(), q);
        assert!(QuantileNet::load(dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        let text = sample().to_json().unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(QuantileNet::from_json(&bumped), Err(Error::Serialization(_))));
        let tagged = text.replace(NET_FORMAT, "other");
        assert!(QuantileNet::from_json(&tagged).is_err());
        let dim = text.replace("\"feature_dim\": 2", "\"feature_dim\": 4");
        assert!(QuantileNet::from_json(&dim).is_err());
        assert!(QuantileNet::from_json("{").is_err());
    }
}
