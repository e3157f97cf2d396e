//! Relation classification, rule inference and evaluation over scenes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::eval::{ap_summary_on_grid, ApSummary, ClassMetrics, ConfusionMatrix, GroundTruthBox, ScoredBox};
use crate::logic::{evaluate_rule_for_head, evaluate_ruleset, LogicError, RelationTable, Rule, RuleParams};
use crate::relnet::{
    self, encode_pair, InputVariant, PairSample, RelNetConfig, RelNetError, RelNetParams, RelationLabel, TrainConfig,
};
use crate::scene::{ClassLabel, ObjectId, Scene, SceneError};
use crate::scenegen::label_relation_oracle;

/// Default decision threshold on the leak probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    RelNet(#[from] RelNetError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("decision threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("scene {0} has no leak label")]
    Unlabeled(usize),
    #[error("evaluation corpus is empty")]
    EmptyCorpus,
    #[error("IoU grid must be non-empty with thresholds in (0, 1]")]
    InvalidIouGrid,
}

/// Trained models needed to score a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub relnet: RelNetParams,
    pub rules: Vec<Rule>,
    pub params: Vec<RuleParams>,
}

/// Classifier output for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairRelation {
    pub subject: ObjectId,
    pub reference: ObjectId,
    pub above: f64,
    pub nearby: f64,
    pub other: f64,
}

impl PairRelation {
    pub fn probs(&self) -> [f64; 3] {
        [self.above, self.nearby, self.other]
    }

    pub fn label(&self) -> RelationLabel {
        let p = self.probs();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        RelationLabel::ALL[best]
    }
}

/// Runs the relation classifier on every ordered pair of distinct objects.
pub fn classify_pairs(relnet: &RelNetParams, scene: &Scene) -> Result<Vec<PairRelation>, PipelineError> {
    let (w, h) = (f64::from(scene.width()), f64::from(scene.height()));
    let grid = relnet.config().grid;
    let objs = scene.objects();
    let mut out = Vec::with_capacity(objs.len() * objs.len().saturating_sub(1));
    for s in objs {
        for r in objs {
            if s.id() == r.id() {
                continue;
            }
            let input = encode_pair(s, r, w, h, grid)?;
            let (_, p) = relnet::predict(relnet, &input)?;
            out.push(PairRelation { subject: s.id(), reference: r.id(), above: p[0], nearby: p[1], other: p[2] });
        }
    }
    Ok(out)
}

pub fn relation_table(pairs: &[PairRelation]) -> RelationTable {
    let mut t = RelationTable::new();
    for p in pairs {
        t.insert(p.subject, p.reference, p.probs());
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InferenceReport {
    pub leak_probability: f64,
    pub decision: bool,
    pub threshold: f64,
    /// Index of the rule that produced the probability; absent when it is 0.
    pub fired_rule: Option<usize>,
    pub binding: Vec<(String, ObjectId)>,
    pub rule_scores: Vec<f64>,
    pub relations: Vec<PairRelation>,
}

fn check_threshold(t: f64) -> Result<(), PipelineError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(PipelineError::InvalidThreshold(t))
    }
}

/// Leak probability of `scene` with the rule that produced it and its
/// object binding. Decision is `probability >= threshold`.
pub fn run_inference(models: &Models, scene: &Scene, threshold: f64) -> Result<InferenceReport, PipelineError> {
    check_threshold(threshold)?;
    let relations = classify_pairs(&models.relnet, scene)?;
    let table = relation_table(&relations);
    let inf = evaluate_ruleset(&models.rules, &models.params, scene, &table)?;
    let p = inf.probability.value();
    let fired = p > 0.0;
    Ok(InferenceReport {
        leak_probability: p,
        decision: p >= threshold,
        threshold,
        fired_rule: fired.then_some(inf.rule),
        binding: match (&inf.binding, fired) {
            (Some(ctx), true) => ctx.iter().map(|(v, id)| (v.to_string(), id)).collect(),
            _ => Vec::new(),
        },
        rule_scores: inf.rule_scores.iter().map(|v| v.value()).collect(),
        relations,
    })
}

/// Max confidence over suspected-area detections (0 if there are none).
pub fn baseline_score(scene: &Scene) -> f64 {
    scene
        .objects()
        .iter()
        .filter(|o| o.class() == ClassLabel::SuspectedArea)
        .map(|o| o.confidence())
        .fold(0.0, f64::max)
}

/// Scene-level leak metrics. Class 0 is normal, class 1 is leak; the total
/// F1 is their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecisionMetrics {
    pub normal: ClassMetrics,
    pub leak: ClassMetrics,
    pub total_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl DecisionMetrics {
    pub fn from_decisions(truth_pred: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut m = ConfusionMatrix::new(2);
        for (t, p) in truth_pred {
            m.add(usize::from(t), usize::from(p));
        }
        Self {
            normal: m.class_metrics(0),
            leak: m.class_metrics(1),
            total_f1: m.macro_f1(),
            accuracy: m.accuracy(),
            confusion: m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub scenes: usize,
    pub threshold: f64,
    pub pipeline: DecisionMetrics,
    /// Confidence-threshold baseline without relations or rules.
    pub baseline: DecisionMetrics,
    /// Oil-area detection AP with rule scores per suspected area.
    pub pipeline_ap: ApSummary,
    /// The same with raw detection confidence as the score.
    pub baseline_ap: ApSummary,
}

/// Suspected areas that are oil areas by the geometric oracle.
fn oil_area_truth(scene: &Scene) -> Vec<ObjectId> {
    let (w, h) = (f64::from(scene.width()), f64::from(scene.height()));
    let objs = scene.objects();
    objs.iter()
        .filter(|s| s.class() == ClassLabel::SuspectedArea)
        .filter(|s| {
            objs.iter().any(|o| match o.class() {
                ClassLabel::Ground => label_relation_oracle(s, o, w, h) == RelationLabel::Above,
                ClassLabel::OilStorageDevice => label_relation_oracle(s, o, w, h) == RelationLabel::Nearby,
                _ => false,
            })
        })
        .map(|s| s.id())
        .collect()
}

/// Evaluates the full pipeline and the confidence-threshold baseline on a
/// labeled corpus.
pub fn run_eval(models: &Models, scenes: &[Scene], threshold: f64) -> Result<EvalReport, PipelineError> {
    run_eval_on_grid(models, scenes, threshold, &crate::eval::IOU_GRID)
}

/// [`run_eval`] with the mAP averaged over `iou_grid`.
pub fn run_eval_on_grid(
    models: &Models,
    scenes: &[Scene],
    threshold: f64,
    iou_grid: &[f64],
) -> Result<EvalReport, PipelineError> {
    check_threshold(threshold)?;
    if iou_grid.is_empty() || iou_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(PipelineError::InvalidIouGrid);
    }
    if scenes.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut pipe = Vec::with_capacity(scenes.len());
    let mut base = Vec::with_capacity(scenes.len());
    let (mut gts, mut pipe_boxes, mut base_boxes) = (Vec::new(), Vec::new(), Vec::new());
    for (i, scene) in scenes.iter().enumerate() {
        let label = scene.leak_label().ok_or(PipelineError::Unlabeled(i))?;
        let relations = classify_pairs(&models.relnet, scene)?;
        let table = relation_table(&relations);
        let inf = evaluate_ruleset(&models.rules, &models.params, scene, &table)?;
        pipe.push((label, inf.probability.value() >= threshold));
        base.push((label, baseline_score(scene) >= threshold));

        for id in oil_area_truth(scene) {
            gts.push(GroundTruthBox { image: i, bbox: *scene.object(id).expect("own id").bbox() });
        }
        for o in scene.objects().iter().filter(|o| o.class() == ClassLabel::SuspectedArea) {
            let mut score = 0.0f64;
            for (r, p) in models.rules.iter().zip(&models.params) {
                score = score.max(evaluate_rule_for_head(r, p, scene, &table, o.id())?.0.value());
            }
            pipe_boxes.push(ScoredBox { image: i, bbox: *o.bbox(), score });
            base_boxes.push(ScoredBox { image: i, bbox: *o.bbox(), score: o.confidence() });
        }
    }
    Ok(EvalReport {
        scenes: scenes.len(),
        threshold,
        pipeline: DecisionMetrics::from_decisions(pipe),
        baseline: DecisionMetrics::from_decisions(base),
        pipeline_ap: ap_summary_on_grid(&pipe_boxes, &gts, iou_grid),
        baseline_ap: ap_summary_on_grid(&base_boxes, &gts, iou_grid),
    })
}

/// Relation-classifier metrics over labeled pairs; the total F1 is the
/// unweighted mean over Above / Nearby / Other.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelationMetrics {
    pub above: ClassMetrics,
    pub nearby: ClassMetrics,
    pub other: ClassMetrics,
    pub total_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn relation_metrics(relnet: &RelNetParams, samples: &[PairSample]) -> Result<RelationMetrics, PipelineError> {
    let mut m = ConfusionMatrix::new(RelationLabel::COUNT);
    for s in samples {
        let (pred, _) = relnet::predict(relnet, &s.input)?;
        m.add(s.label.index(), pred.index());
    }
    Ok(RelationMetrics {
        above: m.class_metrics(0),
        nearby: m.class_metrics(1),
        other: m.class_metrics(2),
        total_f1: m.macro_f1(),
        accuracy: m.accuracy(),
        confusion: m,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationRow {
    pub inputs: InputVariant,
    pub metrics: RelationMetrics,
}

/// Trains one classifier per input variant (position, + type, + contour)
/// from the same initialization seed and scores each on `test`.
pub fn relation_ablation(
    train: &[PairSample],
    test: &[PairSample],
    net: RelNetConfig,
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<Vec<AblationRow>, PipelineError> {
    let mut rows = Vec::with_capacity(InputVariant::ALL.len());
    for inputs in InputVariant::ALL {
        let init = RelNetParams::init(net.with_inputs(inputs), init_seed)?;
        let (trained, _) = relnet::train(&init, train, cfg)?;
        rows.push(AblationRow { inputs, metrics: relation_metrics(&trained, test)? });
    }
    Ok(rows)
}
