//! Trained-model files: parameters plus everything needed to reuse them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetHeader, Scalers};
use crate::error::{Error, Result};
use crate::model::{ModelParams, WireLayout};
use crate::training::TrainConfig;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub n_layers: usize,
    pub param_count: usize,
    /// Wire order of the force outputs, e.g. `H1_y`.
    pub wire_labels: Vec<String>,
    /// Flat parameters: thetas, force scales, force bias, pool scales, pool bias.
    pub params: Vec<f64>,
    pub scalers: Scalers,
    pub train: TrainConfig,
    pub split_seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub dataset: Option<DatasetHeader>,
}

impl Checkpoint {
    pub fn new(
        params: &ModelParams,
        scalers: Scalers,
        train: TrainConfig,
        split_seed: u64,
        best_epoch: usize,
        best_val_loss: f64,
        dataset: Option<DatasetHeader>,
    ) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            n_layers: params.n_layers,
            param_count: params.param_count(),
            wire_labels: WireLayout::labels(),
            params: params.to_flat(),
            scalers,
            train,
            split_seed,
            best_epoch,
            best_val_loss,
            dataset,
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::from_flat(self.n_layers, &self.params).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_layers == 0 || self.n_layers != self.train.n_layers {
            return Err(Error::Schema(format!(
                "layer count {} disagrees with training config ({})",
                self.n_layers, self.train.n_layers
            )));
        }
        let expected = ModelParams::count_for(self.n_layers);
        if self.param_count != expected || self.params.len() != expected {
            return Err(Error::Schema(format!(
                "{} layers need {expected} parameters; header says {}, found {}",
                self.n_layers,
                self.param_count,
                self.params.len()
            )));
        }
        if self.wire_labels != WireLayout::labels() {
            return Err(Error::Schema("wire labels do not match the model layout".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Schema("non-finite parameter".into()));
        }
        self.scalers.validate()?;
        self.model_params()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        ck.validate().map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, OracleConfig};
    use crate::training::init_params;

    fn sample_checkpoint() -> Checkpoint {
        let scalers = Scalers::fit(&generate_synthetic(8, 1, &OracleConfig::default()).unwrap()).unwrap();
        let params = init_params(2, 3).unwrap();
        Checkpoint::new(&params, scalers, TrainConfig::default(), 4, 7, 0.25, None)
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ck = sample_checkpoint();
        assert_eq!(ck.param_count, 50);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupted_files_are_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Schema(_))));

        let mut ck = sample_checkpoint();
        ck.params.pop();
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Schema(_))));
    }
}
