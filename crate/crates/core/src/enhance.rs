//! Contrast enhancement by bi-histogram equalization.
//!
//! The split level is chosen by exhaustive search over all 255 candidates,
//! scoring each equalized candidate on brightness preservation (BPS),
//! contrast gain (OCS) and detail preservation (DPS). The three scores come
//! from the RBD / RCD / ASD metrics computed in [`metrics`].
//!
//! All metrics are derived from exact integer aggregates (pixel sums, sums of
//! squares, Laplacian differences), so the fast search in [`optimize_split`]
//! and the direct per-candidate route in [`evaluate_split`] agree bit for bit.

use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

/// Floor on the input standard deviation when computing RCD.
pub const STD_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnhanceError {
    #[error("image of {width}x{height} cannot hold {len} pixels")]
    BadSize { width: usize, height: usize, len: usize },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("objective weights must be finite, non-negative and not all zero")]
    InvalidWeights,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, EnhanceError> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(EnhanceError::BadSize { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mean(&self) -> f64 {
        Moments::of(self.pixels.iter().copied()).mean()
    }

    pub fn std(&self) -> f64 {
        Moments::of(self.pixels.iter().copied()).std()
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, EnhanceError> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(EnhanceError::BadSize { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Image {
    Gray(GrayImage),
    Color(ColorImage),
}

impl Image {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Image::Gray(g) => (g.width, g.height),
            Image::Color(c) => (c.width, c.height),
        }
    }
}

/// 256-entry intensity mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lut(pub [u8; 256]);

impl Lut {
    pub fn identity() -> Self {
        let mut t = [0u8; 256];
        for (v, slot) in t.iter_mut().enumerate() {
            *slot = v as u8;
        }
        Lut(t)
    }

    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        GrayImage {
            width: img.width,
            height: img.height,
            pixels: img.pixels.iter().map(|&p| self.0[p as usize]).collect(),
        }
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}

// BT.601 full-range coefficients.
const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

fn to_u8(v: f64) -> u8 {
    math::round(v).clamp(0.0, 255.0) as u8
}

/// Splits an RGB image into `(Y, Cr, Cb)` planes (BT.601, full range, rounded).
pub fn rgb_to_ycrcb(img: &ColorImage) -> (GrayImage, GrayImage, GrayImage) {
    let n = img.pixels.len();
    let (mut y, mut cr, mut cb) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &[r, g, b] in &img.pixels {
        let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
        y.push(to_u8(KR * r + KG * g + KB * b));
        cr.push(to_u8(128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b));
        cb.push(to_u8(128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b));
    }
    let plane = |pixels| GrayImage { width: img.width, height: img.height, pixels };
    (plane(y), plane(cr), plane(cb))
}

/// Inverse of [`rgb_to_ycrcb`].
pub fn ycrcb_to_rgb(y: &GrayImage, cr: &GrayImage, cb: &GrayImage) -> Result<ColorImage, EnhanceError> {
    for other in [cr, cb] {
        if other.dims() != y.dims() {
            return Err(EnhanceError::DimensionMismatch(y.dims(), other.dims()));
        }
    }
    let pixels = y
        .pixels
        .iter()
        .zip(&cr.pixels)
        .zip(&cb.pixels)
        .map(|((&y, &cr), &cb)| {
            let y = f64::from(y);
            let cr = f64::from(cr) - 128.0;
            let cb = f64::from(cb) - 128.0;
            [
                to_u8(y + 1.402 * cr),
                to_u8(y - 0.344_136 * cb - 0.714_136 * cr),
                to_u8(y + 1.772 * cb),
            ]
        })
        .collect();
    Ok(ColorImage { width: y.width, height: y.height, pixels })
}

/// Equalizes `hist[lo..=hi]` onto the output range `[lo, hi]`.
///
/// `lut[v] = round(lo + (hi - lo) * cdf(v))`, rounded half up in exact
/// integer arithmetic. An empty sub-histogram leaves the range unchanged.
fn equalize_range(hist: &[u64; 256], lo: usize, hi: usize, lut: &mut [u8; 256]) {
    let total: u64 = hist[lo..=hi].iter().sum();
    if total == 0 {
        for (v, slot) in lut.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *slot = v as u8;
        }
        return;
    }
    let span = (hi - lo) as u128;
    let total = u128::from(total);
    let mut cum = 0u128;
    for v in lo..=hi {
        cum += u128::from(hist[v]);
        let scaled = (2 * span * cum + total) / (2 * total);
        lut[v] = (lo as u128 + scaled) as u8;
    }
}

/// Classic global histogram equalization: `lut[v] = round(255 * cdf(v))`.
pub fn classic_he(img: &GrayImage) -> Lut {
    let mut lut = [0u8; 256];
    equalize_range(&img.histogram(), 0, 255, &mut lut);
    Lut(lut)
}

/// Bi-histogram equalization split at `t`: levels `0..=t` are equalized onto
/// `[0, t]` and `t+1..=255` onto `[t+1, 255]`.
///
/// `t = 255` leaves no upper range and reduces to [`classic_he`].
pub fn bi_he(img: &GrayImage, t: u8) -> Lut {
    bi_he_from_histogram(&img.histogram(), t)
}

pub fn bi_he_from_histogram(hist: &[u64; 256], t: u8) -> Lut {
    let t = t as usize;
    let mut lut = [0u8; 256];
    equalize_range(hist, 0, t, &mut lut);
    if t < 255 {
        equalize_range(hist, t + 1, 255, &mut lut);
    }
    Lut(lut)
}

/// Exact first and second moments of a pixel population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Moments {
    n: u64,
    sum: u64,
    sum_sq: u64,
}

impl Moments {
    fn of(pixels: impl Iterator<Item = u8>) -> Self {
        let mut m = Moments { n: 0, sum: 0, sum_sq: 0 };
        for p in pixels {
            let p = u64::from(p);
            m.n += 1;
            m.sum += p;
            m.sum_sq += p * p;
        }
        m
    }

    fn from_histogram(hist: &[u64; 256], lut: &Lut) -> Self {
        let mut m = Moments { n: 0, sum: 0, sum_sq: 0 };
        for (v, &count) in hist.iter().enumerate() {
            let p = u64::from(lut.0[v]);
            m.n += count;
            m.sum += count * p;
            m.sum_sq += count * p * p;
        }
        m
    }

    fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    fn std(&self) -> f64 {
        let n = i128::from(self.n);
        let numer = n * i128::from(self.sum_sq) - i128::from(self.sum) * i128::from(self.sum);
        math::sqrt(numer as f64 / (n * n) as f64)
    }
}

/// 4-neighbour Laplacian with replicated borders, mapped through `lut`.
fn laplacian(img: &GrayImage, lut: &Lut) -> Vec<i32> {
    let (w, h) = (img.width, img.height);
    let px = |x: usize, y: usize| i32::from(lut.0[img.pixels[y * w + x] as usize]);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            out.push(px(left, y) + px(right, y) + px(x, up) + px(x, down) - 4 * px(x, y));
        }
    }
    out
}

fn laplacian_abs_diff(a: &[i32], b: &[i32]) -> u64 {
    a.iter().zip(b).map(|(x, y)| u64::from(x.abs_diff(*y))).sum()
}

/// Raw differences between an input image and an enhanced candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    /// Relative brightness difference, `|mean(c) - mean(i)| / 255`.
    pub rbd: f64,
    /// Relative contrast difference, `(std(c) - std(i)) / max(std(i), eps)`.
    pub rcd: f64,
    /// Average structural difference: mean absolute Laplacian difference / 255.
    pub asd: f64,
}

fn metrics_from_parts(input: &Moments, candidate: &Moments, lap_diff: u64) -> Metrics {
    let rbd = math::abs(candidate.mean() - input.mean()) / 255.0;
    let rcd = (candidate.std() - input.std()) / input.std().max(STD_EPSILON);
    let asd = lap_diff as f64 / input.n as f64 / 255.0;
    Metrics { rbd, rcd, asd }
}

pub fn metrics(input: &GrayImage, candidate: &GrayImage) -> Result<Metrics, EnhanceError> {
    if input.dims() != candidate.dims() {
        return Err(EnhanceError::DimensionMismatch(input.dims(), candidate.dims()));
    }
    let identity = Lut::identity();
    let diff = laplacian_abs_diff(&laplacian(input, &identity), &laplacian(candidate, &identity));
    Ok(metrics_from_parts(
        &Moments::of(input.pixels.iter().copied()),
        &Moments::of(candidate.pixels.iter().copied()),
        diff,
    ))
}

/// Shaping constants for [`scores`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreParams {
    pub brightness_k: f64,
    pub detail_k: f64,
    /// RCD at which the contrast score saturates.
    pub contrast_target: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { brightness_k: 20.0, detail_k: 20.0, contrast_target: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scores {
    pub bps: f64,
    pub ocs: f64,
    pub dps: f64,
}

pub fn scores(m: &Metrics, params: &ScoreParams) -> Scores {
    Scores {
        bps: math::exp(-params.brightness_k * m.rbd),
        ocs: (m.rcd / params.contrast_target).clamp(0.0, 1.0),
        dps: math::exp(-params.detail_k * m.asd),
    }
}

/// Aggregate objective weights for brightness, contrast and detail.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveWeights {
    pub brightness: f64,
    pub contrast: f64,
    pub detail: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { brightness: 1.0, contrast: 1.0, detail: 1.0 }
    }
}

impl ObjectiveWeights {
    pub fn new(brightness: f64, contrast: f64, detail: f64) -> Result<Self, EnhanceError> {
        let w = Self { brightness, contrast, detail };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        let ws = [self.brightness, self.contrast, self.detail];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().all(|w| *w == 0.0) {
            return Err(EnhanceError::InvalidWeights);
        }
        Ok(())
    }

    pub fn aggregate(&self, s: &Scores) -> f64 {
        self.brightness * s.bps + self.contrast * s.ocs + self.detail * s.dps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnhanceReport {
    pub split: u8,
    pub rbd: f64,
    pub rcd: f64,
    pub asd: f64,
    pub bps: f64,
    pub ocs: f64,
    pub dps: f64,
    pub aggregate: f64,
}

impl EnhanceReport {
    fn new(split: u8, m: Metrics, s: Scores, weights: &ObjectiveWeights) -> Self {
        EnhanceReport {
            split,
            rbd: m.rbd,
            rcd: m.rcd,
            asd: m.asd,
            bps: s.bps,
            ocs: s.ocs,
            dps: s.dps,
            aggregate: weights.aggregate(&s),
        }
    }
}

/// Scores the single split `t` by materializing the candidate image.
pub fn evaluate_split(
    img: &GrayImage,
    t: u8,
    weights: &ObjectiveWeights,
    params: &ScoreParams,
) -> EnhanceReport {
    let candidate = bi_he(img, t).apply(img);
    let m = metrics(img, &candidate).expect("candidate has the input's dimensions");
    EnhanceReport::new(t, m, scores(&m, params), weights)
}

/// Picks the split `t` in `0..=254` maximizing the aggregate score. Ties go to
/// the smaller `t`.
pub fn optimize_split(
    img: &GrayImage,
    weights: &ObjectiveWeights,
    params: &ScoreParams,
) -> Result<EnhanceReport, EnhanceError> {
    weights.validate()?;
    let hist = img.histogram();
    let input_moments = Moments::of(img.pixels.iter().copied());
    let input_lap = laplacian(img, &Lut::identity());

    let mut best: Option<EnhanceReport> = None;
    for t in 0..=254u8 {
        let lut = bi_he_from_histogram(&hist, t);
        let candidate = Moments::from_histogram(&hist, &lut);
        let diff = laplacian_abs_diff(&input_lap, &laplacian(img, &lut));
        let m = metrics_from_parts(&input_moments, &candidate, diff);
        let report = EnhanceReport::new(t, m, scores(&m, params), weights);
        if best.is_none_or(|b| report.aggregate > b.aggregate) {
            best = Some(report);
        }
    }
    Ok(best.expect("255 candidates evaluated"))
}

/// Y/Cr/Cb planes after enhancing the luma plane only.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedPlanes {
    pub y: GrayImage,
    pub cr: GrayImage,
    pub cb: GrayImage,
    pub report: EnhanceReport,
}

pub fn enhance_color_planes(
    img: &ColorImage,
    weights: &ObjectiveWeights,
    params: &ScoreParams,
) -> Result<EnhancedPlanes, EnhanceError> {
    let (y, cr, cb) = rgb_to_ycrcb(img);
    let (y, report) = enhance_gray(&y, weights, params)?;
    Ok(EnhancedPlanes { y, cr, cb, report })
}

pub fn enhance_gray(
    img: &GrayImage,
    weights: &ObjectiveWeights,
    params: &ScoreParams,
) -> Result<(GrayImage, EnhanceReport), EnhanceError> {
    let report = optimize_split(img, weights, params)?;
    Ok((bi_he(img, report.split).apply(img), report))
}

/// Enhances a gray image directly, or the luma plane of a color image.
pub fn enhance_image(
    img: &Image,
    weights: &ObjectiveWeights,
    params: &ScoreParams,
) -> Result<(Image, EnhanceReport), EnhanceError> {
    match img {
        Image::Gray(g) => enhance_gray(g, weights, params).map(|(g, r)| (Image::Gray(g), r)),
        Image::Color(c) => {
            let planes = enhance_color_planes(c, weights, params)?;
            let rgb = ycrcb_to_rgb(&planes.y, &planes.cr, &planes.cb)?;
            Ok((Image::Color(rgb), planes.report))
        }
    }
}
