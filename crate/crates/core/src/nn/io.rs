//! Versioned JSON weight dumps with bit-exact round trips.

use super::{LayerSpec, MlpModel};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDump {
    version: u32,
    spec: LayerSpec,
    trained: bool,
    /// Row-major weight matrices, one per layer.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        let dump = ModelDump {
            version: FORMAT_VERSION,
            spec: self.spec.clone(),
            trained: self.trained,
            weights: self
                .weights
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn from_json(json: &str) -> Result<MlpModel> {
        let dump: ModelDump = serde_json::from_str(json)?;
        if dump.version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                dump.version
            )));
        }
        dump.spec.validate()?;
        let dims = dump.spec.layer_dims();
        if dump.weights.len() != dims.len() || dump.biases.len() != dims.len() {
            return Err(Error::InvalidInput("layer count does not match spec".into()));
        }
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let rows = &dump.weights[l];
            if rows.len() != fan_out || rows.iter().any(|r| r.len() != fan_in) {
                return Err(Error::InvalidInput(format!(
                    "layer {l} weight shape does not match spec"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), flat).unwrap());
            if dump.biases[l].len() != fan_out {
                return Err(Error::InvalidInput(format!(
                    "layer {l} bias shape does not match spec"
                )));
            }
            biases.push(Array1::from_vec(dump.biases[l].clone()));
        }
        Ok(MlpModel {
            spec: dump.spec,
            weights,
            biases,
            trained: dump.trained,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MlpModel> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        MlpModel::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TrainConfig;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut model = MlpModel::init(LayerSpec::new(3, vec![5, 4], 2), 77).unwrap();
        let samples = vec![
            (vec![0.1, 0.2, 0.3], 0),
            (vec![0.9, 0.8, 0.7], 1),
            (vec![0.4, 0.1, 0.6], 0),
            (vec![0.7, 0.9, 0.2], 1),
        ];
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        model.fit(&samples, &cfg).unwrap();

        let json = model.to_json().unwrap();
        let restored = MlpModel::from_json(&json).unwrap();
        assert_eq!(model, restored);
        assert!(restored.is_trained());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let model = MlpModel::init(LayerSpec::new(3, vec![2], 2), 0).unwrap();
        let mut json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        json["weights"][0][0] = serde_json::json!([1.0]);
        assert!(MlpModel::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let model = MlpModel::init(LayerSpec::new(2, vec![], 2), 0).unwrap();
        let mut json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        json["version"] = serde_json::json!(99);
        assert!(MlpModel::from_json(&json.to_string()).is_err());
    }
}
