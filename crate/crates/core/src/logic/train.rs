use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ground::{compile, for_each_binding, RelationTable};
use super::{LogicError, Rule, RuleParams};
use crate::math;
use crate::scene::Scene;

/// Probabilities are clipped to `[ε, 1 - ε]` inside the cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

/// A scene reduced to what rule learning needs: for each rule the distinct
/// atom-value rows of its well-typed bindings (first-seen order), plus the
/// leak label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedScene {
    pub rows: Vec<Vec<Vec<f64>>>,
    pub label: bool,
}

pub fn ground_scene(
    rules: &[Rule],
    scene: &Scene,
    relations: &RelationTable,
    label: bool,
) -> Result<GroundedScene, LogicError> {
    let mut rows = Vec::with_capacity(rules.len());
    for rule in rules {
        let c = compile(rule);
        let mut mine: Vec<Vec<f64>> = Vec::new();
        for_each_binding(&c, scene, relations, None, |_, xs, typed| {
            if typed && !mine.iter().any(|r| r.as_slice() == xs) {
                mine.push(xs.to_vec());
            }
        })?;
        rows.push(mine);
    }
    Ok(GroundedScene { rows, label })
}

/// Winning `(rule, row, z)` for a grounded scene, or `None` when no rule has
/// a typed binding. Ties keep the first.
fn forward(params: &[RuleParams], g: &GroundedScene) -> (f64, Option<(usize, usize, f64)>) {
    let mut best: Option<(f64, (usize, usize, f64))> = None;
    for (r, (p, rows)) in params.iter().zip(&g.rows).enumerate() {
        for (k, row) in rows.iter().enumerate() {
            let z = p.affine(row.iter().copied());
            let y = z.clamp(0.0, 1.0);
            if best.is_none_or(|(b, _)| y > b) {
                best = Some((y, (r, k, z)));
            }
        }
    }
    match best {
        Some((y, at)) => (y, Some(at)),
        None => (0.0, None),
    }
}

fn check_shapes(rules_len: usize, params: &[RuleParams], data: &[GroundedScene]) -> Result<(), LogicError> {
    if params.len() != rules_len {
        return Err(LogicError::ParamCount { rules: rules_len, params: params.len() });
    }
    for g in data {
        if g.rows.len() != params.len() {
            return Err(LogicError::ParamCount { rules: g.rows.len(), params: params.len() });
        }
        for (p, rows) in params.iter().zip(&g.rows) {
            if let Some(row) = rows.iter().find(|r| r.len() != p.weights.len()) {
                return Err(LogicError::LengthMismatch { atoms: row.len(), weights: p.weights.len() });
            }
        }
    }
    Ok(())
}

/// Mean binary cross-entropy of the rule-set output against the labels, and
/// its gradient. The max routes to the first winning binding; the clamp
/// passes gradient only inside `[0, 1]`; clipped probabilities pass none.
pub fn ruleset_loss_and_grad(
    params: &[RuleParams],
    data: &[GroundedScene],
) -> Result<(f64, Vec<RuleParams>), LogicError> {
    if data.is_empty() {
        return Err(LogicError::EmptyDataset);
    }
    check_shapes(params.len(), params, data)?;
    let mut grads: Vec<RuleParams> =
        params.iter().map(|p| RuleParams::new(alloc::vec![0.0; p.weights.len()], 0.0)).collect();
    let n = data.len() as f64;
    let mut loss = 0.0;
    for g in data {
        let (y, at) = forward(params, g);
        let p = y.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        let t = if g.label { 1.0 } else { 0.0 };
        loss -= t * math::ln(p) + (1.0 - t) * math::ln(1.0 - p);
        let clipped = y != p;
        let Some((r, k, z)) = at else { continue };
        if clipped || !(0.0..=1.0).contains(&z) {
            continue;
        }
        let d = (p - t) / (p * (1.0 - p)) / n;
        for (gw, x) in grads[r].weights.iter_mut().zip(&g.rows[r][k]) {
            *gw += d * x;
        }
        grads[r].bias += d;
    }
    Ok((loss / n, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RuleTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    /// Gradients with a larger global L2 norm are rescaled to this norm.
    pub max_grad_norm: f64,
    /// Seeds [`init_rule_params`].
    pub seed: u64,
}

impl Default for RuleTrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, steps: 500, max_grad_norm: 1.0, seed: 0 }
    }
}

impl RuleTrainConfig {
    fn validate(&self) -> Result<(), LogicError> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(LogicError::InvalidConfig("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LogicError::InvalidConfig("momentum must lie in [0, 1)"));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(LogicError::InvalidConfig("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

/// Starting weights near `1 / (n + 1)` each, so all-true premises score
/// about 1.
pub fn init_rule_params(rules: &[Rule], seed: u64) -> Vec<RuleParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rules
        .iter()
        .map(|r| {
            let base = 1.0 / (r.body.len() + 1) as f64;
            let weights = r.body.iter().map(|_| base * (1.0 + rng.random_range(-0.1..0.1))).collect();
            RuleParams::new(weights, base)
        })
        .collect()
}

/// Full-batch gradient descent with momentum and gradient-norm clipping on
/// [`ruleset_loss_and_grad`]. Returns the parameters with the lowest loss
/// seen and the loss before each step followed by the final loss
/// (`steps + 1` entries).
pub fn train_rule_params(
    rules: &[Rule],
    init: &[RuleParams],
    data: &[GroundedScene],
    cfg: &RuleTrainConfig,
) -> Result<(Vec<RuleParams>, Vec<f64>), LogicError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LogicError::EmptyDataset);
    }
    if data.iter().all(|g| g.label) || data.iter().all(|g| !g.label) {
        return Err(LogicError::SingleClass);
    }
    check_shapes(rules.len(), init, data)?;
    let mut params = init.to_vec();
    let mut velocity: Vec<Vec<f64>> = params.iter().map(|p| alloc::vec![0.0; p.weights.len() + 1]).collect();
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut best = (f64::INFINITY, params.clone());
    for step in 0..=cfg.steps {
        let (loss, grads) = ruleset_loss_and_grad(&params, data)?;
        if !loss.is_finite() {
            return Err(LogicError::NonFinite(step));
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if step == cfg.steps {
            break;
        }
        let norm = math::sqrt(grads.iter().flat_map(|g| g.weights.iter().chain([&g.bias])).map(|x| x * x).sum());
        let scale = if norm > cfg.max_grad_norm { cfg.max_grad_norm / norm } else { 1.0 };
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut velocity) {
            let gs = g.weights.iter().chain(core::iter::once(&g.bias));
            let ws = p.weights.iter_mut().chain(core::iter::once(&mut p.bias));
            for ((w, gi), vi) in ws.zip(gs).zip(v.iter_mut()) {
                *vi = cfg.momentum * *vi + scale * gi;
                *w -= cfg.lr * *vi;
            }
        }
        if !params.iter().all(RuleParams::is_finite) {
            return Err(LogicError::NonFinite(step));
        }
    }
    Ok((best.1, history))
}
