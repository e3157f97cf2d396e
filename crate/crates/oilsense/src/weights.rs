//! Versioned JSON weight files for the relation network.

use std::collections::BTreeMap;
use std::path::Path;

use oilsense_core::relnet::{RelNetConfig, RelNetParams, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_bytes, Error, Result};

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorDto {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile {
    version: u32,
    config: RelNetConfig,
    tensors: BTreeMap<String, TensorDto>,
}

pub fn weights_to_json(params: &RelNetParams) -> String {
    let file = WeightFile {
        version: WEIGHTS_VERSION,
        config: *params.config(),
        tensors: params
            .tensors()
            .into_iter()
            .map(|(name, t)| (name.to_string(), TensorDto { shape: t.shape.clone(), data: t.data.clone() }))
            .collect(),
    };
    serde_json::to_string(&file).expect("weight file serializes")
}

pub fn weights_from_json(text: &str) -> Result<RelNetParams, String> {
    let file: WeightFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.version != WEIGHTS_VERSION {
        return Err(format!("unsupported weight file version {} (expected {WEIGHTS_VERSION})", file.version));
    }
    if let Some((name, _)) = file.tensors.iter().find(|(_, t)| t.data.iter().any(|v| !v.is_finite())) {
        return Err(format!("tensor `{name}` holds non-finite values"));
    }
    let tensors = file.tensors.iter().map(|(n, t)| (n.as_str(), Tensor { shape: t.shape.clone(), data: t.data.clone() }));
    RelNetParams::from_named(file.config, tensors).map_err(|e| e.to_string())
}

pub fn save_weights(path: &Path, params: &RelNetParams) -> Result<()> {
    write_bytes(path, weights_to_json(params).as_bytes())
}

pub fn load_weights(path: &Path) -> Result<RelNetParams> {
    weights_from_json(&read_text(path)?).map_err(|m| Error::data(path, m))
}
