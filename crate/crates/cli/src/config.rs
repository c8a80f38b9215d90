//! Run configuration: defaults, overlaid by a TOML file, overlaid by flags.

use std::path::{Path, PathBuf};

use qgnn::dataset::DataConfig;
use qgnn::expressibility::{DEFAULT_BINS, DEFAULT_SAMPLES};
use qgnn::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "QGNN_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpressibilityConfig {
    pub layers: Vec<usize>,
    pub samples: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for ExpressibilityConfig {
    fn default() -> Self {
        ExpressibilityConfig {
            layers: (1..=8).collect(),
            samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
            seed: 1,
        }
    }
}

/// Everything a run depends on. Written back out, fully resolved, next to
/// the run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub expressibility: ExpressibilityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("."),
            threads: 0,
            dataset: None,
            checkpoint: None,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            expressibility: ExpressibilityConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path` (if any) and then the output-dir
    /// environment override. Flags are applied by the caller.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    /// Writes `<output_dir>/<name>-config.toml`.
    pub fn echo(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.output_dir.join(format!("{name}-config.toml"));
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Parse(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// `"3"`, `"1..8"` / `"1..=8"` (both inclusive) or `"1,2,4"`.
pub fn parse_layers(spec: &str) -> Result<Vec<usize>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid layer count {s:?}"))
    };
    let layers = if let Some((a, b)) = spec.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(format!("empty layer range {spec:?}"));
        }
        (lo..=hi).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if layers.contains(&0) {
        return Err("layer counts start at 1".into());
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_specs() {
        assert_eq!(parse_layers("1..8").unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(parse_layers("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_layers("4").unwrap(), vec![4]);
        assert_eq!(parse_layers("1,3").unwrap(), vec![1, 3]);
        assert!(parse_layers("0..2").is_err());
        assert!(parse_layers("3..1").is_err());
        assert!(parse_layers("x").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[train]\nn_layers = 3\n[train.loss]\ngamma = 0.5\n").unwrap();
        assert_eq!(cfg.train.n_layers, 3);
        assert_eq!(cfg.train.loss.gamma, 0.5);
        assert_eq!(cfg.train.loss.batch_size, 128);
        assert_eq!(cfg.data, DataConfig::default());
        assert!(toml::from_str::<RunConfig>("[train]\nlayers = 3\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
