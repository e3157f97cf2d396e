//! Deterministic synthetic scenes and labeled relation pairs.
//!
//! A scene is a ground band along the bottom of the canvas, oil tanks
//! standing on it, irregular suspected-area blobs placed relative to an
//! anchor object according to a sampled relation, and optional distractor
//! shapes. Relation labels always come from [`label_relation_oracle`].

use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::math;
use crate::relnet::{encode_pair, PairSample, RelationLabel, GRID};
use crate::scene::{BBox, ClassLabel, DetectedObject, ObjectId, Point, PolygonMask, Scene, SceneError};

/// Minimum horizontal overlap for Above, as a fraction of the narrower box.
pub const ABOVE_MIN_OVERLAP: f64 = 0.25;
/// Allowed `subject.y2 - reference.y1`, as fractions of the image height.
pub const ABOVE_GAP: (f64, f64) = (-0.05, 0.15);
/// Maximum center distance for Nearby, as a fraction of the image diagonal.
pub const NEARBY_DISTANCE: f64 = 0.25;

/// Share of Nearby/Other placements proposed along an anchor's top edge.
pub const NEAR_MISS_PROB: f64 = 0.5;
const PLACEMENT_ATTEMPTS: usize = 40;
const PAIRS_PER_LABEL_PER_SCENE: usize = 2;
const PAIR_STREAM_SALT: u64 = 0x005E_ED0F_A1B5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(&'static str),
    #[error("the generator config cannot produce `{0}` pairs")]
    Unreachable(RelationLabel),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

/// Closed real range.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FracRange {
    pub min: f64,
    pub max: f64,
}

impl FracRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GenConfig {
    pub width: u32,
    pub height: u32,
    pub tanks: CountRange,
    pub blobs: CountRange,
    pub blob_vertices: CountRange,
    /// Mean blob radius as a fraction of the shorter canvas side.
    pub blob_radius: FracRange,
    /// Mean radius of `other`-class distractors, same units.
    pub distractor_radius: FracRange,
    /// Per-vertex radius jitter, as a fraction of the mean radius.
    pub radius_jitter: f64,
    /// Ground band height as a fraction of the canvas height.
    pub ground_band: FracRange,
    /// Probability that a scene gets one extra `other`-class shape.
    pub distractor_prob: f64,
    /// Probability that a scene keeps every suspected area away from the
    /// ground top and from tanks, making it leak-free.
    pub clean_prob: f64,
    /// Target fractions for Above / Nearby / Other placements.
    pub relation_mix: [f64; 3],
    /// Std of the confidence noise; confidence is `1 - |N(0, s)|` in `[0.5, 1]`.
    pub confidence_jitter: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 192,
            tanks: CountRange::new(1, 2),
            blobs: CountRange::new(1, 2),
            blob_vertices: CountRange::new(8, 16),
            blob_radius: FracRange::new(0.04, 0.09),
            distractor_radius: FracRange::new(0.10, 0.18),
            radius_jitter: 0.4,
            ground_band: FracRange::new(0.3, 0.5),
            distractor_prob: 0.5,
            clean_prob: 0.5,
            relation_mix: [1.0 / 3.0; 3],
            confidence_jitter: 0.1,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.width < 16 || self.height < 16 {
            return Err(GenError::InvalidConfig("canvas must be at least 16x16"));
        }
        for r in [self.tanks, self.blobs, self.blob_vertices] {
            if r.min > r.max {
                return Err(GenError::InvalidConfig("count range has min > max"));
            }
        }
        if self.blob_vertices.min < 3 {
            return Err(GenError::InvalidConfig("blobs need at least 3 vertices"));
        }
        for r in [self.blob_radius, self.distractor_radius] {
            if !r.is_valid() || r.min <= 0.0 || r.max > 0.5 {
                return Err(GenError::InvalidConfig("blob radius range must lie in (0, 0.5]"));
            }
        }
        if !self.ground_band.is_valid() || self.ground_band.min <= 0.0 || self.ground_band.max >= 1.0 {
            return Err(GenError::InvalidConfig("ground band range must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.radius_jitter) {
            return Err(GenError::InvalidConfig("radius jitter must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.clean_prob) {
            return Err(GenError::InvalidConfig("clean probability must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) {
            return Err(GenError::InvalidConfig("distractor probability must lie in [0, 1]"));
        }
        if self.relation_mix.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(GenError::InvalidConfig("relation mix fractions must be non-negative"));
        }
        if math::abs(self.relation_mix.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(GenError::InvalidConfig("relation mix must sum to 1"));
        }
        if !(self.confidence_jitter.is_finite() && self.confidence_jitter >= 0.0) {
            return Err(GenError::InvalidConfig("confidence jitter must be non-negative"));
        }
        Ok(())
    }
}

/// Ground-truth relation of `subject` to `reference`.
///
/// Above: horizontal overlap of at least [`ABOVE_MIN_OVERLAP`] of the
/// narrower box, subject bottom within [`ABOVE_GAP`] of the reference top and
/// subject center higher than the reference center. Otherwise Nearby when the
/// centers are within [`NEARBY_DISTANCE`] of the diagonal, else Other.
pub fn label_relation_oracle(
    subject: &DetectedObject,
    reference: &DetectedObject,
    img_w: f64,
    img_h: f64,
) -> RelationLabel {
    relation_of_boxes(subject.bbox(), reference.bbox(), img_w, img_h)
}

fn relation_of_boxes(s: &BBox, r: &BBox, img_w: f64, img_h: f64) -> RelationLabel {
    let overlap = s.x2().min(r.x2()) - s.x1().max(r.x1());
    let narrower = s.width().min(r.width());
    let gap = s.y2() - r.y1();
    let (sc, rc) = (s.center(), r.center());
    if overlap >= ABOVE_MIN_OVERLAP * narrower
        && gap >= ABOVE_GAP.0 * img_h
        && gap <= ABOVE_GAP.1 * img_h
        && sc.y < rc.y
    {
        return RelationLabel::Above;
    }
    if math::hypot(sc.x - rc.x, sc.y - rc.y) <= NEARBY_DISTANCE * math::hypot(img_w, img_h) {
        RelationLabel::Nearby
    } else {
        RelationLabel::Other
    }
}

/// An object deliberately placed in a given relation to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub subject: ObjectId,
    pub reference: ObjectId,
    pub relation: RelationLabel,
}

/// A generated scene with the placements that shaped it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    pub scene: Scene,
    pub placements: Vec<Placement>,
}

fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick_relation(mix: &[f64; 3], rng: &mut impl Rng) -> RelationLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (r, f) in RelationLabel::ALL.iter().zip(mix) {
        acc += f;
        if u < acc {
            return *r;
        }
    }
    // Rounding left a sliver past the last boundary; use the last non-empty class.
    RelationLabel::ALL.into_iter().rev().find(|r| mix[r.index()] > 0.0).unwrap_or(RelationLabel::Other)
}

struct Builder<'a> {
    cfg: &'a GenConfig,
    w: f64,
    h: f64,
    noise: Normal<f64>,
    objects: Vec<DetectedObject>,
}

impl Builder<'_> {
    fn confidence(&self, rng: &mut impl Rng) -> f64 {
        (1.0 - math::abs(self.noise.sample(rng))).clamp(0.5, 1.0)
    }

    fn push(&mut self, class: ClassLabel, polygon: PolygonMask, rng: &mut impl Rng) -> Result<ObjectId, GenError> {
        let id = self.objects.len() as ObjectId;
        let bbox = polygon.bounding_box()?;
        let conf = self.confidence(rng);
        self.objects.push(DetectedObject::new(id, class, conf, bbox, polygon)?);
        Ok(id)
    }

    /// Star-convex polygon around `(cx, cy)`, or `None` if it leaves the canvas.
    fn blob(&self, cx: f64, cy: f64, radius: f64, rng: &mut impl Rng) -> Option<PolygonMask> {
        let n = self.cfg.blob_vertices.sample(rng);
        let step = 2.0 * core::f64::consts::PI / n as f64;
        let phase = rng.random_range(0.0..step);
        let j = self.cfg.radius_jitter;
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            let a = phase + step * k as f64 + rng.random_range(-0.3..0.3) * step;
            let r = radius * (1.0 + if j > 0.0 { rng.random_range(-j..j) } else { 0.0 });
            let p = Point::new(cx + r * math::cos(a), cy + r * math::sin(a));
            if p.x < 0.0 || p.y < 0.0 || p.x > self.w || p.y > self.h {
                return None;
            }
            pts.push(p);
        }
        PolygonMask::new(pts).ok()
    }

    /// True if a suspected area with this box would count as a leak.
    fn leaky(&self, bbox: &BBox) -> bool {
        self.objects.iter().any(|o| match o.class() {
            ClassLabel::Ground => relation_of_boxes(bbox, o.bbox(), self.w, self.h) == RelationLabel::Above,
            ClassLabel::OilStorageDevice => relation_of_boxes(bbox, o.bbox(), self.w, self.h) == RelationLabel::Nearby,
            _ => false,
        })
    }

    /// Places a blob of `class` in `relation` to `anchor`, retrying until the
    /// oracle agrees (and, with `clean`, until the blob is not a leak).
    /// Returns `None` when every attempt fails.
    fn place(
        &mut self,
        class: ClassLabel,
        relation: RelationLabel,
        anchor: ObjectId,
        clean: bool,
        rng: &mut impl Rng,
    ) -> Result<Option<ObjectId>, GenError> {
        let a = *self.objects[anchor as usize].bbox();
        let side = self.w.min(self.h);
        let diag = math::hypot(self.w, self.h);
        for _ in 0..PLACEMENT_ATTEMPTS {
            let sizes = if class == ClassLabel::Other { self.cfg.distractor_radius } else { self.cfg.blob_radius };
            let radius = sizes.sample(rng) * side;
            let hug = relation == RelationLabel::Above || rng.random_bool(NEAR_MISS_PROB);
            let (cx, cy) = match relation {
                _ if hug => {
                    let bottom = a.y1() + rng.random_range(-0.10..0.22) * self.h;
                    (rng.random_range(a.x1() - radius..a.x2() + radius), bottom - radius * 0.9)
                }
                RelationLabel::Nearby => {
                    let c = a.center();
                    let t = rng.random_range(0.0..2.0 * core::f64::consts::PI);
                    let d = rng.random_range(0.04..0.22) * diag;
                    (c.x + d * math::cos(t), c.y + d * math::sin(t))
                }
                _ => (rng.random_range(0.0..self.w), rng.random_range(0.0..self.h)),
            };
            let Some(poly) = self.blob(cx, cy, radius, rng) else { continue };
            let bbox = poly.bounding_box()?;
            if relation_of_boxes(&bbox, &a, self.w, self.h) == relation && !(clean && self.leaky(&bbox)) {
                return self.push(class, poly, rng).map(Some);
            }
        }
        Ok(None)
    }

    fn anchor_for(&self, relation: RelationLabel, tanks: &[ObjectId], clean: bool, rng: &mut impl Rng) -> ObjectId {
        let ground = 0;
        if clean {
            // Leak-free scenes: sit on tanks, cluster around non-tank shapes.
            let loose: Vec<ObjectId> =
                self.objects.iter().filter(|o| o.class() != ClassLabel::OilStorageDevice).map(|o| o.id()).collect();
            return match relation {
                RelationLabel::Above if !tanks.is_empty() => *tanks.choose(rng).unwrap(),
                RelationLabel::Nearby if loose.len() > 1 => *loose[1..].choose(rng).unwrap(),
                _ => *loose.choose(rng).unwrap(),
            };
        }
        match relation {
            RelationLabel::Above if !tanks.is_empty() && rng.random_bool(0.35) => *tanks.choose(rng).unwrap(),
            RelationLabel::Above => ground,
            RelationLabel::Nearby if !tanks.is_empty() && rng.random_bool(0.75) => *tanks.choose(rng).unwrap(),
            _ => rng.random_range(0..self.objects.len()) as ObjectId,
        }
    }
}

/// [`gen_scene`] plus the placement record for each blob and distractor.
pub fn gen_scene_with_layout(cfg: &GenConfig, index: u64) -> Result<SceneLayout, GenError> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, index);
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let noise = Normal::new(0.0, cfg.confidence_jitter).map_err(|_| GenError::InvalidConfig("confidence jitter"))?;
    let mut b = Builder { cfg, w, h, noise, objects: Vec::new() };

    let top = h * (1.0 - cfg.ground_band.sample(&mut rng));
    b.push(ClassLabel::Ground, PolygonMask::rectangle(&BBox::new(0.0, top, w, h)?), &mut rng)?;

    let mut tanks = Vec::new();
    let mut taken: Vec<(f64, f64)> = Vec::new();
    for _ in 0..cfg.tanks.sample(&mut rng) {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let tw = rng.random_range(0.08..0.15) * w;
            let th = rng.random_range(0.15..0.3) * h;
            let x1 = rng.random_range(0.0..w - tw);
            if taken.iter().any(|&(l, r)| x1 < r + 0.02 * w && x1 + tw > l - 0.02 * w) {
                continue;
            }
            let y2 = (top + rng.random_range(0.02..0.08) * h).min(h);
            let y1 = (y2 - th).max(0.0);
            let dome = 0.15 * (y2 - y1);
            let poly = PolygonMask::new(alloc::vec![
                Point::new(x1, y2),
                Point::new(x1, y1 + dome),
                Point::new(x1 + tw / 2.0, y1),
                Point::new(x1 + tw, y1 + dome),
                Point::new(x1 + tw, y2),
            ])?;
            tanks.push(b.push(ClassLabel::OilStorageDevice, poly, &mut rng)?);
            taken.push((x1, x1 + tw));
            break;
        }
    }

    let clean = rng.random_bool(cfg.clean_prob);
    let mut placements = Vec::new();
    if rng.random_bool(cfg.distractor_prob) {
        let relation = pick_relation(&cfg.relation_mix, &mut rng);
        let anchor = b.anchor_for(relation, &tanks, false, &mut rng);
        if let Some(id) = b.place(ClassLabel::Other, relation, anchor, false, &mut rng)? {
            placements.push(Placement { subject: id, reference: anchor, relation });
        }
    }
    let mut blobs = Vec::new();
    for _ in 0..cfg.blobs.sample(&mut rng) {
        let relation = pick_relation(&cfg.relation_mix, &mut rng);
        let anchor = b.anchor_for(relation, &tanks, clean, &mut rng);
        if let Some(id) = b.place(ClassLabel::SuspectedArea, relation, anchor, clean, &mut rng)? {
            placements.push(Placement { subject: id, reference: anchor, relation });
            blobs.push(id);
        }
    }

    let leak = blobs.iter().any(|&s| b.leaky(b.objects[s as usize].bbox()));
    let scene = Scene::new(None, cfg.width, cfg.height, b.objects, Some(leak))?;
    Ok(SceneLayout { scene, placements })
}

/// Scene number `index` of the corpus defined by `cfg`. A pure function of
/// `(cfg, index)`.
pub fn gen_scene(cfg: &GenConfig, index: u64) -> Result<Scene, GenError> {
    gen_scene_with_layout(cfg, index).map(|l| l.scene)
}

/// Every ordered pair of distinct objects in `scene`, labeled by
/// [`label_relation_oracle`] and encoded on a `grid`×`grid` raster.
pub fn oracle_pairs(scene: &Scene, grid: usize) -> Result<Vec<PairSample>, SceneError> {
    let (w, h) = (f64::from(scene.width()), f64::from(scene.height()));
    let objs = scene.objects();
    let mut out = Vec::with_capacity(objs.len() * objs.len().saturating_sub(1));
    for s in objs {
        for r in objs.iter().filter(|r| r.id() != s.id()) {
            out.push(PairSample { input: encode_pair(s, r, w, h, grid)?, label: label_relation_oracle(s, r, w, h) });
        }
    }
    Ok(out)
}

/// Where a pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub seed: u64,
    pub scene: u64,
    pub subject: ObjectId,
    pub reference: ObjectId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub sample: PairSample,
    pub provenance: Provenance,
}

/// Per-class pair counts for `n` pairs under `mix`, by largest remainder.
pub fn pair_quotas(mix: &[f64; 3], n: usize) -> [usize; 3] {
    let exact = mix.map(|f| f * n as f64);
    let mut q = exact.map(|e| e as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - q[b] as f64).total_cmp(&(exact[a] - q[a] as f64)).then(a.cmp(&b)));
    let mut left = n - q.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        if mix[i] > 0.0 {
            q[i] += 1;
            left -= 1;
        }
    }
    q
}

/// `n_pairs` labeled pairs drawn from consecutive scenes, balanced to
/// `cfg.relation_mix`. At most two pairs per class are taken from one scene.
pub fn gen_pair_dataset(cfg: &GenConfig, n_pairs: usize) -> Result<Vec<LabeledPair>, GenError> {
    cfg.validate()?;
    if n_pairs == 0 {
        return Err(GenError::InvalidConfig("n_pairs must be at least 1"));
    }
    let mut quota = pair_quotas(&cfg.relation_mix, n_pairs);
    let mut found = [0usize; 3];
    let mut out = Vec::with_capacity(n_pairs);
    let max_scenes = (20 * n_pairs).max(500) as u64;
    for index in 0..max_scenes {
        if quota.iter().all(|&q| q == 0) {
            return Ok(out);
        }
        if index == 500 {
            if let Some(r) = RelationLabel::ALL.into_iter().find(|r| quota[r.index()] > 0 && found[r.index()] == 0) {
                return Err(GenError::Unreachable(r));
            }
        }
        let scene = gen_scene(cfg, index)?;
        let (w, h) = (f64::from(scene.width()), f64::from(scene.height()));
        let objs = scene.objects();
        let mut pairs: Vec<(usize, usize)> =
            (0..objs.len()).flat_map(|i| (0..objs.len()).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        pairs.shuffle(&mut scene_rng(cfg.seed ^ PAIR_STREAM_SALT, index));
        let mut taken = [0usize; 3];
        for (i, j) in pairs {
            let label = label_relation_oracle(&objs[i], &objs[j], w, h);
            let k = label.index();
            found[k] += 1;
            if quota[k] == 0 || taken[k] == PAIRS_PER_LABEL_PER_SCENE {
                continue;
            }
            quota[k] -= 1;
            taken[k] += 1;
            out.push(LabeledPair {
                sample: PairSample { input: encode_pair(&objs[i], &objs[j], w, h, GRID)?, label },
                provenance: Provenance { seed: cfg.seed, scene: index, subject: objs[i].id(), reference: objs[j].id() },
            });
        }
    }
    if quota.iter().all(|&q| q == 0) {
        return Ok(out);
    }
    let r = RelationLabel::ALL.into_iter().find(|r| quota[r.index()] > 0).unwrap_or(RelationLabel::Other);
    Err(GenError::Unreachable(r))
}
