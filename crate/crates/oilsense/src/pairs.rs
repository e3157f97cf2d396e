//! Pair datasets as JSON-lines, one labeled pair per line.

use std::path::Path;

use oilsense_core::relnet::{PairInput, PairSample, RelationLabel};
use oilsense_core::scene::{CLASS_VECTOR_LEN, POSITION_LEN};
use oilsense_core::scenegen::{LabeledPair, Provenance};
use oilsense_core::MaskRaster;
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_bytes, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RasterDto {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairDto {
    provenance: Provenance,
    label: String,
    position: [f64; POSITION_LEN],
    classes: [f64; CLASS_VECTOR_LEN],
    raster: RasterDto,
}

pub fn pair_to_json_line(p: &LabeledPair) -> String {
    let input = &p.sample.input;
    let dto = PairDto {
        provenance: p.provenance,
        label: p.sample.label.as_str().to_string(),
        position: input.position,
        classes: input.classes,
        raster: RasterDto { width: input.raster.width(), height: input.raster.height(), values: input.raster.values().to_vec() },
    };
    serde_json::to_string(&dto).expect("pair serializes")
}

pub fn pair_from_json_line(line: &str) -> Result<LabeledPair, String> {
    let dto: PairDto = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label: RelationLabel = dto.label.parse().map_err(|_| format!("label: unknown relation `{}`", dto.label))?;
    let raster = MaskRaster::new(dto.raster.width, dto.raster.height, dto.raster.values).map_err(|e| format!("raster: {e}"))?;
    if dto.position.iter().chain(&dto.classes).any(|v| !v.is_finite()) {
        return Err("non-finite feature value".into());
    }
    Ok(LabeledPair {
        sample: PairSample { input: PairInput { raster, position: dto.position, classes: dto.classes }, label },
        provenance: dto.provenance,
    })
}

pub fn save_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&pair_to_json_line(p));
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

/// Reads a JSON-lines pair file; blank lines are skipped and errors name the
/// 1-based line.
pub fn load_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(pair_from_json_line(line).map_err(|m| Error::data(path, format!("line {}: {m}", i + 1)))?);
    }
    if out.is_empty() {
        return Err(Error::data(path, "no pairs"));
    }
    Ok(out)
}
