//! Pairwise spatial-relation classifier.
//!
//! An ordered object pair is encoded as a 28×28 joint mask (subject drawn at
//! 1.0, reference at 0.5) plus an 8-wide position vector and an 8-wide class
//! vector. The contour branch runs conv → pool → conv → pool, the position and
//! class vectors go through a first fully connected layer, and a second fully
//! connected layer fuses both before a 3-way softmax head.

mod network;
mod params;
mod train;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::scene::{self, DetectedObject, MaskRaster, SceneError, CLASS_VECTOR_LEN, POSITION_LEN};

pub use network::{forward, loss_and_grad, predict, FeatureMap, RelNetActivations};
pub use params::{RelNetParams, Tensor, TENSOR_NAMES};
pub use train::{accuracy, train, EpochStats, LrStep, TrainConfig};

/// Side of the square pair raster.
pub const GRID: usize = 28;
/// Margin added on each side of the union box when framing a pair.
pub const FRAME_MARGIN: f64 = 0.1;
pub const SUBJECT_VALUE: f64 = 1.0;
pub const REFERENCE_VALUE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelNetError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training labels cover a single class")]
    SingleClass,
    #[error("invalid network config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(&'static str),
    #[error("input raster is {found}x{found_h}, network expects {expected}x{expected}")]
    InputSize { expected: usize, found: usize, found_h: usize },
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("tensor `{0}` missing")]
    MissingTensor(String),
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}; learning rate too high?")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
}

/// Relation of a subject object to a reference object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationLabel {
    Above,
    Nearby,
    Other,
}

impl RelationLabel {
    pub const COUNT: usize = 3;
    pub const ALL: [RelationLabel; 3] = [RelationLabel::Above, RelationLabel::Nearby, RelationLabel::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Above => "above",
            RelationLabel::Nearby => "nearby",
            RelationLabel::Other => "other",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| s.to_string())
    }
}

/// Which input branches a model sees. Excluded branches are zeroed at both
/// training and inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InputVariant {
    Position,
    PositionClass,
    #[default]
    Full,
}

impl InputVariant {
    pub const ALL: [InputVariant; 3] = [InputVariant::Position, InputVariant::PositionClass, InputVariant::Full];

    pub fn uses_class(self) -> bool {
        !matches!(self, InputVariant::Position)
    }

    pub fn uses_contour(self) -> bool {
        matches!(self, InputVariant::Full)
    }

    pub fn describe(self) -> &'static str {
        match self {
            InputVariant::Position => "position",
            InputVariant::PositionClass => "position + type",
            InputVariant::Full => "position + type + contour",
        }
    }
}

/// Layer sizes. [`RelNetConfig::default`] is the full-size architecture:
/// 28×28×1 → 14×14×256 → 3×3×256, fully connected widths 1024 and 256.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RelNetConfig {
    pub grid: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub fc1_width: usize,
    pub fc2_width: usize,
    pub inputs: InputVariant,
}

impl Default for RelNetConfig {
    fn default() -> Self {
        Self { grid: GRID, conv1_filters: 256, conv2_filters: 256, fc1_width: 1024, fc2_width: 256, inputs: InputVariant::Full }
    }
}

/// Derived (channels, height, width) at each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub input: (usize, usize, usize),
    pub conv1: (usize, usize, usize),
    pub pool1: (usize, usize, usize),
    pub conv2: (usize, usize, usize),
    pub pool2: (usize, usize, usize),
    pub fc1: usize,
    pub fc2: usize,
    pub classes: usize,
}

impl RelNetConfig {
    /// Smaller widths with the same layer chain.
    pub fn compact(conv_filters: usize, fc1_width: usize, fc2_width: usize) -> Self {
        Self { grid: GRID, conv1_filters: conv_filters, conv2_filters: conv_filters, fc1_width, fc2_width, inputs: InputVariant::Full }
    }

    pub fn with_inputs(mut self, inputs: InputVariant) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn validate(&self) -> Result<(), RelNetError> {
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.fc1_width == 0 || self.fc2_width == 0 {
            return Err(RelNetError::InvalidConfig("layer widths must be positive"));
        }
        // pool1 must fit one 3x3 stride-2 window, conv2 one 2x2 pool window.
        if self.grid / 2 < 5 {
            return Err(RelNetError::InvalidConfig("grid too small for the conv/pool chain"));
        }
        Ok(())
    }

    pub fn shapes(&self) -> ShapeChain {
        let g = self.grid;
        let p1 = g / 2;
        let c2 = (p1 - 3) / 2 + 1;
        let p2 = c2 / 2;
        ShapeChain {
            input: (1, g, g),
            conv1: (self.conv1_filters, g, g),
            pool1: (self.conv1_filters, p1, p1),
            conv2: (self.conv2_filters, c2, c2),
            pool2: (self.conv2_filters, p2, p2),
            fc1: self.fc1_width,
            fc2: self.fc2_width,
            classes: RelationLabel::COUNT,
        }
    }

    pub(crate) fn vector_len(&self) -> usize {
        POSITION_LEN + CLASS_VECTOR_LEN
    }

    pub(crate) fn contour_len(&self) -> usize {
        let (c, h, w) = self.shapes().pool2;
        c * h * w
    }
}

/// Network input for one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub raster: MaskRaster,
    pub position: [f64; POSITION_LEN],
    pub classes: [f64; CLASS_VECTOR_LEN],
}

/// A labeled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub input: PairInput,
    pub label: RelationLabel,
}

/// Builds the network input for `(subject, reference)`.
///
/// Both polygons are rendered in the union box of the two objects grown by
/// [`FRAME_MARGIN`] per side; subject cells take 1.0, reference-only cells 0.5.
pub fn encode_pair(
    subject: &DetectedObject,
    reference: &DetectedObject,
    img_w: f64,
    img_h: f64,
    grid: usize,
) -> Result<PairInput, SceneError> {
    let frame = subject.bbox().union(reference.bbox()).expand(FRAME_MARGIN);
    let s = scene::rasterize(subject.polygon().vertices(), &frame, grid, grid)?;
    let r = scene::rasterize(reference.polygon().vertices(), &frame, grid, grid)?;
    let values: Vec<f64> = s
        .values()
        .iter()
        .zip(r.values())
        .map(|(&a, &b)| if a > 0.0 { SUBJECT_VALUE } else if b > 0.0 { REFERENCE_VALUE } else { 0.0 })
        .collect();
    Ok(PairInput {
        raster: MaskRaster::new(grid, grid, values)?,
        position: scene::position_vector(subject, reference, img_w, img_h)?,
        classes: scene::class_vector(subject.class(), reference.class()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BBox, ClassLabel, PolygonMask};

    fn rect(id: u32, class: ClassLabel, b: [f64; 4]) -> DetectedObject {
        let bbox = BBox::new(b[0], b[1], b[2], b[3]).unwrap();
        DetectedObject::new(id, class, 1.0, bbox, PolygonMask::rectangle(&bbox)).unwrap()
    }

    #[test]
    fn default_config_shape_chain() {
        let s = RelNetConfig::default().shapes();
        assert_eq!(s.input, (1, 28, 28));
        assert_eq!(s.pool1, (256, 14, 14));
        assert_eq!(s.conv2, (256, 6, 6));
        assert_eq!(s.pool2, (256, 3, 3));
        assert_eq!((s.fc1, s.fc2, s.classes), (1024, 256, 3));
    }

    #[test]
    fn config_validation() {
        assert!(RelNetConfig::default().validate().is_ok());
        assert!(RelNetConfig::compact(0, 8, 8).validate().is_err());
        let tiny = RelNetConfig { grid: 4, ..RelNetConfig::compact(2, 4, 4) };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn joint_raster_values() {
        let a = rect(1, ClassLabel::SuspectedArea, [10.0, 10.0, 20.0, 20.0]);
        let b = rect(2, ClassLabel::Ground, [15.0, 15.0, 40.0, 30.0]);
        let input = encode_pair(&a, &b, 100.0, 100.0, GRID).unwrap();
        let vals = input.raster.values();
        assert!(vals.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));
        assert!(vals.contains(&1.0) && vals.contains(&0.5) && vals.contains(&0.0));
        // Swapping roles swaps which object carries 1.0.
        let swapped = encode_pair(&b, &a, 100.0, 100.0, GRID).unwrap();
        let ones = |r: &MaskRaster| r.values().iter().filter(|&&v| v == 1.0).count();
        assert!(ones(&swapped.raster) > ones(&input.raster));
    }

    #[test]
    fn relation_label_strings() {
        for r in RelationLabel::ALL {
            assert_eq!(r.as_str().parse::<RelationLabel>().unwrap(), r);
        }
        assert!("on".parse::<RelationLabel>().is_err());
    }
}
