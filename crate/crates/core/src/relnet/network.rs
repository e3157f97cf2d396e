use alloc::vec;
use alloc::vec::Vec;

use super::{PairInput, PairSample, RelNetError, RelNetParams, RelationLabel};
use crate::math;
use crate::scene::{CLASS_VECTOR_LEN, POSITION_LEN};

/// Channel-major feature map `[c][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RelNetActivations {
    /// After conv1, ReLU and 2×2 max-pool.
    pub m_ctr1: FeatureMap,
    /// After conv2, ReLU and 2×2 max-pool.
    pub m_ctr2: FeatureMap,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub logits: [f64; 3],
    pub y: [f64; 3],
    contour: Vec<f64>,
    vector: Vec<f64>,
    conv1: FeatureMap,
    pool1_arg: Vec<usize>,
    conv2: FeatureMap,
    pool2_arg: Vec<usize>,
}

fn relu_inplace(xs: &mut [f64]) {
    for x in xs {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// `out[o] = b[o] + sum_i w[o][i] * x[i]`.
fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| bias + w[o * n..(o + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// 2×2 stride-2 max-pool. Ties route to the first maximum in scan order.
fn max_pool(input: &FeatureMap) -> (FeatureMap, Vec<usize>) {
    let (oh, ow) = (input.height / 2, input.width / 2);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    let mut arg = vec![0usize; out.data.len()];
    for c in 0..input.channels {
        let base = c * input.height * input.width;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * input.width + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * input.width + 2 * x + dx;
                    if input.data[idx] > input.data[best] {
                        best = idx;
                    }
                }
                let o = (c * oh + y) * ow + x;
                out.data[o] = input.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

/// 3×3 convolution of a single-channel `g`×`g` input, stride 1, zero padding 1.
fn conv_same(w: &[f64], b: &[f64], input: &[f64], g: usize) -> FeatureMap {
    let filters = b.len();
    let mut out = FeatureMap::zeros(filters, g, g);
    for f in 0..filters {
        let plane = &mut out.data[f * g * g..(f + 1) * g * g];
        plane.fill(b[f]);
        for ky in 0..3 {
            for kx in 0..3 {
                let wv = w[f * 9 + ky * 3 + kx];
                if wv == 0.0 {
                    continue;
                }
                // Output rows/cols whose tap lands inside the input.
                let (y0, y1) = (usize::from(ky == 0), g - usize::from(ky == 2));
                let (x0, x1) = (usize::from(kx == 0), g - usize::from(kx == 2));
                for y in y0..y1 {
                    let src = &input[(y + ky - 1) * g..(y + ky) * g];
                    let dst = &mut plane[y * g..(y + 1) * g];
                    for x in x0..x1 {
                        dst[x] += wv * src[x + kx - 1];
                    }
                }
            }
        }
    }
    out
}

/// 3×3 convolution, stride 2, no padding.
fn conv_stride2(w: &[f64], b: &[f64], input: &FeatureMap) -> FeatureMap {
    let filters = b.len();
    let cin = input.channels;
    let (ih, iw) = (input.height, input.width);
    let (oh, ow) = ((ih - 3) / 2 + 1, (iw - 3) / 2 + 1);
    let mut out = FeatureMap::zeros(filters, oh, ow);
    for f in 0..filters {
        let plane = &mut out.data[f * oh * ow..(f + 1) * oh * ow];
        plane.fill(b[f]);
        for c in 0..cin {
            let src = &input.data[c * ih * iw..(c + 1) * ih * iw];
            let k = &w[(f * cin + c) * 9..(f * cin + c + 1) * 9];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..3 {
                        let row = &src[(2 * oy + ky) * iw + 2 * ox..];
                        acc += k[ky * 3] * row[0] + k[ky * 3 + 1] * row[1] + k[ky * 3 + 2] * row[2];
                    }
                    plane[oy * ow + ox] += acc;
                }
            }
        }
    }
    out
}

fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| math::exp(l - m));
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn log_sum_exp(logits: &[f64; 3]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + math::ln(logits.iter().map(|l| math::exp(l - m)).sum::<f64>())
}

/// Runs the full network on one pair. Input branches excluded by the model's
/// [`InputVariant`](super::InputVariant) are zeroed first.
pub fn forward(params: &RelNetParams, input: &PairInput) -> Result<RelNetActivations, RelNetError> {
    let cfg = params.config();
    let g = cfg.grid;
    if input.raster.width() != g || input.raster.height() != g {
        return Err(RelNetError::InputSize { expected: g, found: input.raster.width(), found_h: input.raster.height() });
    }
    let contour = if cfg.inputs.uses_contour() { input.raster.values().to_vec() } else { vec![0.0; g * g] };
    let mut vector = Vec::with_capacity(POSITION_LEN + CLASS_VECTOR_LEN);
    vector.extend_from_slice(&input.position);
    if cfg.inputs.uses_class() {
        vector.extend_from_slice(&input.classes);
    } else {
        vector.extend_from_slice(&[0.0; CLASS_VECTOR_LEN]);
    }

    let mut conv1 = conv_same(&params.conv1_w.data, &params.conv1_b.data, &contour, g);
    relu_inplace(&mut conv1.data);
    let (m_ctr1, pool1_arg) = max_pool(&conv1);
    let mut conv2 = conv_stride2(&params.conv2_w.data, &params.conv2_b.data, &m_ctr1);
    relu_inplace(&mut conv2.data);
    let (m_ctr2, pool2_arg) = max_pool(&conv2);

    let mut v1 = dense(&params.fc1_w.data, &params.fc1_b.data, &vector);
    relu_inplace(&mut v1);
    let mut fused = v1.clone();
    fused.extend_from_slice(&m_ctr2.data);
    let mut v2 = dense(&params.fc2_w.data, &params.fc2_b.data, &fused);
    relu_inplace(&mut v2);
    let head = dense(&params.head_w.data, &params.head_b.data, &v2);
    let logits = [head[0], head[1], head[2]];
    let y = softmax(&logits);

    Ok(RelNetActivations { m_ctr1, m_ctr2, v1, v2, logits, y, contour, vector, conv1, pool1_arg, conv2, pool2_arg })
}

/// Most probable relation; ties resolve in `Above < Nearby < Other` order.
pub fn predict(params: &RelNetParams, input: &PairInput) -> Result<(RelationLabel, [f64; 3]), RelNetError> {
    let y = forward(params, input)?.y;
    Ok((argmax_label(&y), y))
}

pub(crate) fn argmax_label(y: &[f64; 3]) -> RelationLabel {
    let mut best = 0;
    for i in 1..3 {
        if y[i] > y[best] {
            best = i;
        }
    }
    RelationLabel::ALL[best]
}

fn add_outer(grad: &mut [f64], dout: &[f64], x: &[f64]) {
    let n = x.len();
    for (o, &d) in dout.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (g, &xi) in grad[o * n..(o + 1) * n].iter_mut().zip(x) {
            *g += d * xi;
        }
    }
}

fn dense_input_grad(w: &[f64], dout: &[f64], n: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n];
    for (o, &d) in dout.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (dxi, &wi) in dx.iter_mut().zip(&w[o * n..(o + 1) * n]) {
            *dxi += d * wi;
        }
    }
    dx
}

/// Accumulates `scale * d(-ln y[label])/dparams` into `grads`.
fn backward(params: &RelNetParams, act: &RelNetActivations, label: RelationLabel, scale: f64, grads: &mut RelNetParams) {
    let cfg = params.config();
    let g = cfg.grid;

    let mut dlogits = act.y;
    dlogits[label.index()] -= 1.0;
    for d in &mut dlogits {
        *d *= scale;
    }

    // head
    add_outer(&mut grads.head_w.data, &dlogits, &act.v2);
    for (gb, d) in grads.head_b.data.iter_mut().zip(&dlogits) {
        *gb += d;
    }
    let mut dv2 = dense_input_grad(&params.head_w.data, &dlogits, act.v2.len());
    for (d, &v) in dv2.iter_mut().zip(&act.v2) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }

    // fc2 over [v1, flatten(m_ctr2)]
    let mut fused = act.v1.clone();
    fused.extend_from_slice(&act.m_ctr2.data);
    add_outer(&mut grads.fc2_w.data, &dv2, &fused);
    for (gb, d) in grads.fc2_b.data.iter_mut().zip(&dv2) {
        *gb += d;
    }
    let dfused = dense_input_grad(&params.fc2_w.data, &dv2, fused.len());
    let (dv1, dm2) = dfused.split_at(act.v1.len());

    // fc1
    let mut dv1 = dv1.to_vec();
    for (d, &v) in dv1.iter_mut().zip(&act.v1) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    add_outer(&mut grads.fc1_w.data, &dv1, &act.vector);
    for (gb, d) in grads.fc1_b.data.iter_mut().zip(&dv1) {
        *gb += d;
    }

    // pool2 -> conv2 (ReLU gate)
    let mut dconv2 = vec![0.0; act.conv2.data.len()];
    for (&src, &d) in act.pool2_arg.iter().zip(dm2) {
        dconv2[src] += d;
    }
    for (d, &v) in dconv2.iter_mut().zip(&act.conv2.data) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }

    // conv2 (stride 2, valid)
    let f2 = act.conv2.channels;
    let (oh, ow) = (act.conv2.height, act.conv2.width);
    let cin = act.m_ctr1.channels;
    let (ih, iw) = (act.m_ctr1.height, act.m_ctr1.width);
    let mut dpool1 = vec![0.0; act.m_ctr1.data.len()];
    for f in 0..f2 {
        let dplane = &dconv2[f * oh * ow..(f + 1) * oh * ow];
        if dplane.iter().all(|&d| d == 0.0) {
            continue;
        }
        grads.conv2_b.data[f] += dplane.iter().sum::<f64>();
        for c in 0..cin {
            let src = &act.m_ctr1.data[c * ih * iw..(c + 1) * ih * iw];
            let kbase = (f * cin + c) * 9;
            let dsrc = &mut dpool1[c * ih * iw..(c + 1) * ih * iw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = params.conv2_w.data[kbase + ky * 3 + kx];
                    let mut gw = 0.0;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let d = dplane[oy * ow + ox];
                            let idx = (2 * oy + ky) * iw + 2 * ox + kx;
                            gw += d * src[idx];
                            dsrc[idx] += d * wv;
                        }
                    }
                    grads.conv2_w.data[kbase + ky * 3 + kx] += gw;
                }
            }
        }
    }

    // pool1 -> conv1 (ReLU gate)
    let mut dconv1 = vec![0.0; act.conv1.data.len()];
    for (&src, &d) in act.pool1_arg.iter().zip(&dpool1) {
        dconv1[src] += d;
    }
    for (d, &v) in dconv1.iter_mut().zip(&act.conv1.data) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }

    // conv1 (stride 1, same padding); the input gradient is not needed.
    let f1 = act.conv1.channels;
    for f in 0..f1 {
        let dplane = &dconv1[f * g * g..(f + 1) * g * g];
        grads.conv1_b.data[f] += dplane.iter().sum::<f64>();
        for ky in 0..3 {
            for kx in 0..3 {
                let (y0, y1) = (usize::from(ky == 0), g - usize::from(ky == 2));
                let (x0, x1) = (usize::from(kx == 0), g - usize::from(kx == 2));
                let mut gw = 0.0;
                for y in y0..y1 {
                    let src = &act.contour[(y + ky - 1) * g..(y + ky) * g];
                    let drow = &dplane[y * g..(y + 1) * g];
                    for x in x0..x1 {
                        gw += drow[x] * src[x + kx - 1];
                    }
                }
                grads.conv1_w.data[f * 9 + ky * 3 + kx] += gw;
            }
        }
    }
}

/// Mean cross-entropy `-ln y[label]` over `batch` and its exact gradient.
pub fn loss_and_grad(params: &RelNetParams, batch: &[PairSample]) -> Result<(f64, RelNetParams), RelNetError> {
    let (loss, grads, _) = loss_grad_correct(params, batch)?;
    Ok((loss, grads))
}

/// As [`loss_and_grad`], also counting correctly classified samples.
pub(crate) fn loss_grad_correct(
    params: &RelNetParams,
    batch: &[PairSample],
) -> Result<(f64, RelNetParams, usize), RelNetError> {
    if batch.is_empty() {
        return Err(RelNetError::EmptyBatch);
    }
    let mut grads = RelNetParams::zeros(*params.config())?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    for sample in batch {
        let act = forward(params, &sample.input)?;
        loss += log_sum_exp(&act.logits) - act.logits[sample.label.index()];
        if argmax_label(&act.y) == sample.label {
            correct += 1;
        }
        backward(params, &act, sample.label, scale, &mut grads);
    }
    Ok((loss * scale, grads, correct))
}
