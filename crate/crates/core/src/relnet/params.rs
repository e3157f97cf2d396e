use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{RelNetConfig, RelNetError, RelationLabel};
use crate::math;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tensor names in the order they appear in weight files.
pub const TENSOR_NAMES: [&str; 10] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
    "head.weight",
    "head.bias",
];

/// All learnable tensors of the relation network.
///
/// Convolution weights are `[out, in, 3, 3]`, fully connected weights
/// `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelNetParams {
    config: RelNetConfig,
    pub(crate) conv1_w: Tensor,
    pub(crate) conv1_b: Tensor,
    pub(crate) conv2_w: Tensor,
    pub(crate) conv2_b: Tensor,
    pub(crate) fc1_w: Tensor,
    pub(crate) fc1_b: Tensor,
    pub(crate) fc2_w: Tensor,
    pub(crate) fc2_b: Tensor,
    pub(crate) head_w: Tensor,
    pub(crate) head_b: Tensor,
}

fn expected_shapes(cfg: &RelNetConfig) -> [Vec<usize>; 10] {
    let (f1, f2) = (cfg.conv1_filters, cfg.conv2_filters);
    [
        vec![f1, 1, 3, 3],
        vec![f1],
        vec![f2, f1, 3, 3],
        vec![f2],
        vec![cfg.fc1_width, cfg.vector_len()],
        vec![cfg.fc1_width],
        vec![cfg.fc2_width, cfg.fc1_width + cfg.contour_len()],
        vec![cfg.fc2_width],
        vec![RelationLabel::COUNT, cfg.fc2_width],
        vec![RelationLabel::COUNT],
    ]
}

impl RelNetParams {
    pub fn zeros(config: RelNetConfig) -> Result<Self, RelNetError> {
        config.validate()?;
        let s = expected_shapes(&config);
        Ok(Self {
            config,
            conv1_w: Tensor::zeros(&s[0]),
            conv1_b: Tensor::zeros(&s[1]),
            conv2_w: Tensor::zeros(&s[2]),
            conv2_b: Tensor::zeros(&s[3]),
            fc1_w: Tensor::zeros(&s[4]),
            fc1_b: Tensor::zeros(&s[5]),
            fc2_w: Tensor::zeros(&s[6]),
            fc2_b: Tensor::zeros(&s[7]),
            head_w: Tensor::zeros(&s[8]),
            head_b: Tensor::zeros(&s[9]),
        })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(config: RelNetConfig, seed: u64) -> Result<Self, RelNetError> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in p.tensors_mut().into_iter().step_by(2) {
            let fan_in: usize = t.shape[1..].iter().product();
            let normal = Normal::new(0.0, math::sqrt(2.0 / fan_in as f64)).expect("positive std");
            for w in &mut t.data {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    /// Builds parameters from named tensors, checking every shape against
    /// `config`.
    pub fn from_named<'a>(
        config: RelNetConfig,
        tensors: impl IntoIterator<Item = (&'a str, Tensor)>,
    ) -> Result<Self, RelNetError> {
        let mut p = Self::zeros(config)?;
        let mut seen = [false; 10];
        for (name, t) in tensors {
            let idx = TENSOR_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| RelNetError::UnknownTensor(name.to_string()))?;
            let all = p.tensors_mut();
            let slot = &mut *all[idx].1;
            if slot.shape != t.shape || t.data.len() != slot.data.len() {
                return Err(RelNetError::ShapeMismatch {
                    name: name.to_string(),
                    expected: slot.shape.clone(),
                    found: t.shape,
                });
            }
            *slot = t;
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(RelNetError::MissingTensor(TENSOR_NAMES[i].to_string()));
        }
        Ok(p)
    }

    pub fn config(&self) -> &RelNetConfig {
        &self.config
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 10] {
        [
            (TENSOR_NAMES[0], &self.conv1_w),
            (TENSOR_NAMES[1], &self.conv1_b),
            (TENSOR_NAMES[2], &self.conv2_w),
            (TENSOR_NAMES[3], &self.conv2_b),
            (TENSOR_NAMES[4], &self.fc1_w),
            (TENSOR_NAMES[5], &self.fc1_b),
            (TENSOR_NAMES[6], &self.fc2_w),
            (TENSOR_NAMES[7], &self.fc2_b),
            (TENSOR_NAMES[8], &self.head_w),
            (TENSOR_NAMES[9], &self.head_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 10] {
        [
            (TENSOR_NAMES[0], &mut self.conv1_w),
            (TENSOR_NAMES[1], &mut self.conv1_b),
            (TENSOR_NAMES[2], &mut self.conv2_w),
            (TENSOR_NAMES[3], &mut self.conv2_b),
            (TENSOR_NAMES[4], &mut self.fc1_w),
            (TENSOR_NAMES[5], &mut self.fc1_b),
            (TENSOR_NAMES[6], &mut self.fc2_w),
            (TENSOR_NAMES[7], &mut self.fc2_b),
            (TENSOR_NAMES[8], &mut self.head_w),
            (TENSOR_NAMES[9], &mut self.head_b),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    /// Flattened copy of every parameter in [`TENSOR_NAMES`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.data.iter().copied()).collect()
    }

    /// Visits every parameter mutably in [`TENSOR_NAMES`] order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for (_, t) in self.tensors_mut() {
            for v in &mut t.data {
                f(i, v);
                i += 1;
            }
        }
    }
}
