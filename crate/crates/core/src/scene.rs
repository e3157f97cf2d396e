//! Scene and detection types, polygon rasterization, and pair geometry.
//!
//! Image coordinates follow the raster convention: `x` grows to the right and
//! `y` grows downward, so "above" means a smaller `y`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::math;

/// Identifier of a detection, unique within its scene.
pub type ObjectId = u32;

/// Length of [`position_vector`] output.
pub const POSITION_LEN: usize = 8;
/// Length of [`class_vector`] output.
pub const CLASS_VECTOR_LEN: usize = 2 * ClassLabel::COUNT;

/// Why a scene-model value was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneErrorKind {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("confidence out of range ({0})")]
    ConfidenceOutOfRange(f64),
    #[error("degenerate bbox [{x1}, {y1}, {x2}, {y2}]")]
    DegenerateBBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("consecutive identical vertices at index {0}")]
    RepeatedVertex(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("vertex ({x}, {y}) lies outside the image")]
    VertexOutOfBounds { x: f64, y: f64 },
    #[error("duplicate object id {0}")]
    DuplicateId(ObjectId),
    #[error("image dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("raster of {width}x{height} cannot hold {len} values")]
    RasterSize { width: usize, height: usize, len: usize },
    #[error("raster value {0} outside [0, 1]")]
    RasterValue(f64),
}

/// A [`SceneErrorKind`] together with the path of the offending field, e.g.
/// `objects[2].score`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneError {
    pub path: String,
    pub kind: SceneErrorKind,
}

impl SceneError {
    pub fn new(kind: SceneErrorKind) -> Self {
        Self { path: String::new(), kind }
    }

    /// Prefixes the field path with `prefix`.
    pub fn at(mut self, prefix: &str) -> Self {
        self.path = if self.path.is_empty() {
            prefix.to_string()
        } else if self.path.starts_with('[') {
            alloc::format!("{prefix}{}", self.path)
        } else {
            alloc::format!("{prefix}.{}", self.path)
        };
        self
    }
}

impl From<SceneErrorKind> for SceneError {
    fn from(kind: SceneErrorKind) -> Self {
        Self::new(kind)
    }
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "{}: {}", self.path, self.kind)
        }
    }
}

impl core::error::Error for SceneError {}

/// Object category produced by the segmentation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    SuspectedArea,
    Ground,
    OilStorageDevice,
    Other,
}

impl ClassLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::SuspectedArea,
        ClassLabel::Ground,
        ClassLabel::OilStorageDevice,
        ClassLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Name used in scene JSON.
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::SuspectedArea => "suspected_area",
            ClassLabel::Ground => "ground",
            ClassLabel::OilStorageDevice => "oil_storage_device",
            ClassLabel::Other => "other",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| SceneErrorKind::UnknownClass(s.to_string()).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned box with `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, SceneError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(SceneErrorKind::NonFinite.into());
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(SceneErrorKind::DegenerateBBox { x1, y1, x2, y2 }.into());
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }
    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Grows every side by `fraction` of the box's own width/height.
    pub fn expand(&self, fraction: f64) -> BBox {
        let dx = self.width() * fraction;
        let dy = self.height() * fraction;
        BBox { x1: self.x1 - dx, y1: self.y1 - dy, x2: self.x2 + dx, y2: self.y2 + dy }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<BBox, SceneError> {
        BBox::new(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)
    }
}

/// Intersection over union of two boxes.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Closed polygon given by its vertices; the last vertex connects to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonMask {
    vertices: Vec<Point>,
}

impl PolygonMask {
    pub fn new(vertices: Vec<Point>) -> Result<Self, SceneError> {
        validate_vertices(&vertices)?;
        for (i, pair) in vertices.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Err(SceneErrorKind::RepeatedVertex(i + 1).into());
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle polygon covering `bbox`.
    pub fn rectangle(bbox: &BBox) -> Self {
        Self {
            vertices: alloc::vec![
                Point::new(bbox.x1, bbox.y1),
                Point::new(bbox.x2, bbox.y1),
                Point::new(bbox.x2, bbox.y2),
                Point::new(bbox.x1, bbox.y2),
            ],
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(&self.vertices, p)
    }

    /// Tight bounding box of the vertices.
    pub fn bounding_box(&self) -> Result<BBox, SceneError> {
        let mut x1 = f64::INFINITY;
        let mut y1 = f64::INFINITY;
        let mut x2 = f64::NEG_INFINITY;
        let mut y2 = f64::NEG_INFINITY;
        for v in &self.vertices {
            x1 = x1.min(v.x);
            y1 = y1.min(v.y);
            x2 = x2.max(v.x);
            y2 = y2.max(v.y);
        }
        BBox::new(x1, y1, x2, y2)
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            twice += a.x * b.y - b.x * a.y;
        }
        math::abs(twice) * 0.5
    }
}

fn validate_vertices(vertices: &[Point]) -> Result<(), SceneError> {
    if vertices.len() < 3 {
        return Err(SceneErrorKind::TooFewVertices(vertices.len()).into());
    }
    if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
        return Err(SceneErrorKind::NonFinite.into());
    }
    Ok(())
}

/// Even-odd crossing test.
fn point_in_polygon(vertices: &[Point], p: Point) -> bool {
    let mut inside = false;
    let mut j = vertices.len() - 1;
    for i in 0..vertices.len() {
        let a = vertices[i];
        let b = vertices[j];
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Row-major grid of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRaster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl MaskRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, SceneError> {
        if width == 0 || height == 0 || width * height != values.len() {
            return Err(SceneErrorKind::RasterSize { width, height, len: values.len() }.into());
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SceneErrorKind::RasterValue(bad).into());
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: alloc::vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Mean cell value; for a crisp mask this is the covered fraction.
    pub fn filled_fraction(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Renders `polygon` onto an `out_w`×`out_h` grid spanning `frame`.
///
/// A cell is 1.0 iff its center lies inside the polygon (even-odd rule).
pub fn rasterize(
    polygon: &[Point],
    frame: &BBox,
    out_w: usize,
    out_h: usize,
) -> Result<MaskRaster, SceneError> {
    validate_vertices(polygon)?;
    if out_w == 0 || out_h == 0 {
        return Err(SceneErrorKind::RasterSize { width: out_w, height: out_h, len: 0 }.into());
    }
    let sx = frame.width() / out_w as f64;
    let sy = frame.height() / out_h as f64;
    let mut values = Vec::with_capacity(out_w * out_h);
    for row in 0..out_h {
        let y = frame.y1 + (row as f64 + 0.5) * sy;
        for col in 0..out_w {
            let x = frame.x1 + (col as f64 + 0.5) * sx;
            values.push(if point_in_polygon(polygon, Point::new(x, y)) { 1.0 } else { 0.0 });
        }
    }
    Ok(MaskRaster { width: out_w, height: out_h, values })
}

/// One detection from the segmentation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    id: ObjectId,
    class: ClassLabel,
    confidence: f64,
    bbox: BBox,
    polygon: PolygonMask,
}

impl DetectedObject {
    pub fn new(
        id: ObjectId,
        class: ClassLabel,
        confidence: f64,
        bbox: BBox,
        polygon: PolygonMask,
    ) -> Result<Self, SceneError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(SceneError::new(SceneErrorKind::ConfidenceOutOfRange(confidence)).at("score"));
        }
        Ok(Self { id, class, confidence, bbox, polygon })
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }
    pub fn class(&self) -> ClassLabel {
        self.class
    }
    pub fn confidence(&self) -> f64 {
        self.confidence
    }
    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }
    pub fn polygon(&self) -> &PolygonMask {
        &self.polygon
    }
}

/// A frame's worth of detections plus an optional leak ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    image_path: Option<String>,
    width: u32,
    height: u32,
    objects: Vec<DetectedObject>,
    leak_label: Option<bool>,
}

/// Slack allowed for polygon vertices beyond the image border, in pixels.
pub const BOUNDS_TOLERANCE: f64 = 1.0;

impl Scene {
    pub fn new(
        image_path: Option<String>,
        width: u32,
        height: u32,
        objects: Vec<DetectedObject>,
        leak_label: Option<bool>,
    ) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneErrorKind::BadDimensions { width, height }.into());
        }
        let (w, h) = (f64::from(width), f64::from(height));
        for (i, obj) in objects.iter().enumerate() {
            if objects[..i].iter().any(|o| o.id == obj.id) {
                return Err(SceneError::new(SceneErrorKind::DuplicateId(obj.id))
                    .at("id")
                    .at(&alloc::format!("objects[{i}]")));
            }
            for (k, v) in obj.polygon.vertices.iter().enumerate() {
                let inside = v.x >= -BOUNDS_TOLERANCE
                    && v.y >= -BOUNDS_TOLERANCE
                    && v.x <= w + BOUNDS_TOLERANCE
                    && v.y <= h + BOUNDS_TOLERANCE;
                if !inside {
                    return Err(SceneError::new(SceneErrorKind::VertexOutOfBounds { x: v.x, y: v.y })
                        .at(&alloc::format!("objects[{i}].polygon[{k}]")));
                }
            }
        }
        Ok(Self { image_path, width, height, objects, leak_label })
    }

    pub fn image_path(&self) -> Option<&str> {
        self.image_path.as_deref()
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn objects(&self) -> &[DetectedObject] {
        &self.objects
    }
    pub fn leak_label(&self) -> Option<bool> {
        self.leak_label
    }

    pub fn object(&self, id: ObjectId) -> Option<&DetectedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn with_leak_label(mut self, label: Option<bool>) -> Self {
        self.leak_label = label;
        self
    }

    pub fn diagonal(&self) -> f64 {
        math::hypot(f64::from(self.width), f64::from(self.height))
    }
}

/// Geometry features of an ordered pair, all scale invariant:
///
/// `[sx, sy, rx, ry, ln(ws/wr), ln(hs/hr), dx, dy]` where `(sx, sy)` and
/// `(rx, ry)` are the subject/reference centers divided by the image size and
/// `(dx, dy) = (sx - rx, sy - ry)`.
pub fn position_vector(
    subject: &DetectedObject,
    reference: &DetectedObject,
    img_w: f64,
    img_h: f64,
) -> Result<[f64; POSITION_LEN], SceneError> {
    if !(img_w > 0.0 && img_h > 0.0) {
        return Err(SceneErrorKind::BadDimensions { width: img_w as u32, height: img_h as u32 }.into());
    }
    let (s, r) = (subject.bbox(), reference.bbox());
    let (sc, rc) = (s.center(), r.center());
    let (sx, sy) = (sc.x / img_w, sc.y / img_h);
    let (rx, ry) = (rc.x / img_w, rc.y / img_h);
    Ok([
        sx,
        sy,
        rx,
        ry,
        math::ln(s.width() / r.width()),
        math::ln(s.height() / r.height()),
        (sc.x - rc.x) / img_w,
        (sc.y - rc.y) / img_h,
    ])
}

/// Two concatenated one-hot blocks: subject class then reference class.
pub fn class_vector(subject: ClassLabel, reference: ClassLabel) -> [f64; CLASS_VECTOR_LEN] {
    let mut v = [0.0; CLASS_VECTOR_LEN];
    v[subject.index()] = 1.0;
    v[ClassLabel::COUNT + reference.index()] = 1.0;
    v
}
