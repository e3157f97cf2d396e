//! JSON configuration files. Relative paths inside a config resolve against
//! the config file's directory.

use std::path::{Path, PathBuf};

use oilsense_core::enhance::ObjectiveWeights;
use oilsense_core::eval::IOU_GRID;
use oilsense_core::pipeline::DEFAULT_THRESHOLD;
use oilsense_core::relnet::{RelNetConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_bytes, Error, Result};

/// A parsed config with the SHA-256 of its raw bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub hash: String,
    pub dir: PathBuf,
}

impl<T> Loaded<T> {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and parses a config file. Every failure, including a missing file,
/// is a config error.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let bytes = read_bytes(path).map_err(|e| Error::config(path, e))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| Error::config(path, e))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { value, hash: sha256_hex(&bytes), dir })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    pub enabled: bool,
    pub weights: ObjectiveWeights,
}

/// Relation-classifier ablation inputs for `eval --ablations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    pub train_pairs: PathBuf,
    /// Held-out pairs; without them every ordered pair of the evaluated
    /// scenes is labeled by the geometric oracle.
    #[serde(default)]
    pub test_pairs: Option<PathBuf>,
    #[serde(default)]
    pub network: RelNetConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_grid() -> Vec<f64> {
    IOU_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub rules: PathBuf,
    pub relnet: PathBuf,
    /// Parameter file; when absent the rules file must carry `@ [...]` params.
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub enhance: EnhanceSection,
    #[serde(default = "default_grid")]
    pub iou_grid: Vec<f64>,
    /// Seeds ablation retraining.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ablation: Option<AblationSection>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!("threshold {} is outside (0, 1)", self.threshold));
        }
        if self.iou_grid.is_empty() || self.iou_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err("iou_grid must be non-empty with thresholds in (0, 1]".into());
        }
        if self.enhance.enabled {
            self.enhance.weights.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// `train-rel` config.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelTrainFile {
    pub network: RelNetConfig,
    pub train: TrainConfig,
    /// Seeds the initial weights.
    pub init_seed: u64,
}
