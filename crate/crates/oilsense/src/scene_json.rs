//! Scene JSON: one scene per file.
//!
//! ```json
//! { "image": "frame.ppm", "width": 640, "height": 480, "leak_label": true,
//!   "objects": [ { "id": 0, "class": "ground", "score": 0.97,
//!                  "bbox": [0, 300, 640, 480],
//!                  "polygon": [[0, 300], [640, 300], [640, 480], [0, 480]] } ] }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use oilsense_core::scene::{BBox, DetectedObject, PolygonMask, Scene, SceneError};
use oilsense_core::{ClassLabel, ObjectId, Point};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_bytes, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SceneDto {
    #[serde(default)]
    image: Option<String>,
    width: u32,
    height: u32,
    #[serde(default)]
    leak_label: Option<bool>,
    objects: Vec<ObjectDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectDto {
    id: ObjectId,
    class: String,
    score: f64,
    bbox: [f64; 4],
    polygon: Vec<[f64; 2]>,
}

/// A scene file that failed to parse or validate. `path` names the offending
/// field, e.g. `objects[2].score`; syntax errors carry a line and column instead.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneJsonError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SceneJsonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for SceneJsonError {}

impl From<SceneError> for SceneJsonError {
    fn from(e: SceneError) -> Self {
        Self { path: e.path, message: e.kind.to_string() }
    }
}

fn object_from_dto(i: usize, o: ObjectDto) -> Result<DetectedObject, SceneError> {
    let at = |e: SceneError| e.at(&format!("objects[{i}]"));
    let class: ClassLabel = o.class.parse().map_err(|e: SceneError| at(e.at("class")))?;
    let [x1, y1, x2, y2] = o.bbox;
    let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| at(e.at("bbox")))?;
    let polygon = PolygonMask::new(o.polygon.iter().map(|&[x, y]| Point::new(x, y)).collect())
        .map_err(|e| at(e.at("polygon")))?;
    DetectedObject::new(o.id, class, o.score, bbox, polygon).map_err(at)
}

pub fn parse_scene_json(text: &str) -> Result<Scene, SceneJsonError> {
    let dto: SceneDto = serde_json::from_str(text).map_err(|e| SceneJsonError { path: String::new(), message: e.to_string() })?;
    let objects = dto
        .objects
        .into_iter()
        .enumerate()
        .map(|(i, o)| object_from_dto(i, o))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scene::new(dto.image, dto.width, dto.height, objects, dto.leak_label)?)
}

pub fn scene_to_json(scene: &Scene) -> String {
    let dto = SceneDto {
        image: scene.image_path().map(str::to_string),
        width: scene.width(),
        height: scene.height(),
        leak_label: scene.leak_label(),
        objects: scene
            .objects()
            .iter()
            .map(|o| ObjectDto {
                id: o.id(),
                class: o.class().as_str().to_string(),
                score: o.confidence(),
                bbox: o.bbox().to_array(),
                polygon: o.polygon().vertices().iter().map(|p| [p.x, p.y]).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&dto).expect("scene DTO serializes")
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene_json(&read_text(path)?).map_err(|e| Error::data(path, e))
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_bytes(path, scene_to_json(scene).as_bytes())
}

/// Every `*.json` file directly inside `dir`, sorted by file name.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<(PathBuf, Scene)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::data(dir, "no scene files (*.json)"));
    }
    paths.sort();
    paths.into_iter().map(|p| load_scene(&p).map(|s| (p, s))).collect()
}
