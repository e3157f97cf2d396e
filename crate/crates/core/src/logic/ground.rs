use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{fuzzy_not, Atom, FuzzyValue, LogicError, Rule, RuleParams};
use crate::relnet::RelationLabel;
use crate::scene::{ObjectId, Scene};

/// Relation class probabilities for ordered object pairs.
///
/// A pair of an object with itself is never looked up: it reads as
/// certainly `Other`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationTable {
    probs: BTreeMap<(ObjectId, ObjectId), [f64; RelationLabel::COUNT]>,
}

impl RelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subject: ObjectId, reference: ObjectId, probs: [f64; RelationLabel::COUNT]) {
        self.probs.insert((subject, reference), probs);
    }

    pub fn get(&self, subject: ObjectId, reference: ObjectId) -> Option<[f64; RelationLabel::COUNT]> {
        if subject == reference {
            return Some([0.0, 0.0, 1.0]);
        }
        self.probs.get(&(subject, reference)).copied()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((ObjectId, ObjectId), [f64; RelationLabel::COUNT])> + '_ {
        self.probs.iter().map(|(k, v)| (*k, *v))
    }
}

/// Assignment of rule variables to scene object ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundingContext {
    bindings: Vec<(String, ObjectId)>,
}

impl GroundingContext {
    pub fn new(bindings: impl IntoIterator<Item = (String, ObjectId)>) -> Self {
        Self { bindings: bindings.into_iter().collect() }
    }

    pub fn get(&self, var: &str) -> Option<ObjectId> {
        self.bindings.iter().find(|(v, _)| v == var).map(|(_, id)| *id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ObjectId)> {
        self.bindings.iter().map(|(v, id)| (v.as_str(), *id))
    }
}

/// Truth degree of `atom` under `ctx`.
///
/// Class predicates give the bound detection's confidence when its class
/// matches and 0 otherwise; `On` / `Around` give the Above / Nearby
/// probability of the ordered pair.
pub fn atom_probability(
    atom: &Atom,
    ctx: &GroundingContext,
    scene: &Scene,
    relations: &RelationTable,
) -> Result<FuzzyValue, LogicError> {
    let mut ids = [0 as ObjectId; 2];
    for (slot, var) in ids.iter_mut().zip(&atom.args) {
        *slot = ctx.get(var).ok_or_else(|| LogicError::UnboundVariable(var.clone()))?;
    }
    raw_value(atom, &ids[..atom.args.len()], scene, relations)
}

fn raw_value(atom: &Atom, ids: &[ObjectId], scene: &Scene, relations: &RelationTable) -> Result<FuzzyValue, LogicError> {
    let v = if let Some(class) = atom.predicate.class() {
        let obj = scene.object(ids[0]).ok_or(LogicError::UnknownObject(ids[0]))?;
        if obj.class() == class {
            FuzzyValue::new(obj.confidence())
        } else {
            FuzzyValue::FALSE
        }
    } else {
        let rel = atom.predicate.relation().expect("binary predicate");
        for &id in ids {
            scene.object(id).ok_or(LogicError::UnknownObject(id))?;
        }
        let probs = relations.get(ids[0], ids[1]).ok_or(LogicError::MissingRelation(ids[0], ids[1]))?;
        FuzzyValue::new(probs[rel.index()])
    };
    Ok(if atom.negated { fuzzy_not(v) } else { v })
}

/// A rule with variables resolved to positions in [`Rule::vars`].
pub(crate) struct Compiled<'r> {
    pub vars: Vec<&'r str>,
    pub atoms: Vec<(&'r Atom, [usize; 2])>,
}

pub(crate) fn compile(rule: &Rule) -> Compiled<'_> {
    let vars = rule.vars();
    let atoms = rule
        .body
        .iter()
        .map(|a| {
            let mut slots = [0usize; 2];
            for (s, v) in slots.iter_mut().zip(&a.args) {
                *s = vars.iter().position(|x| x == v).expect("collected by vars()");
            }
            (a, slots)
        })
        .collect();
    Compiled { vars, atoms }
}

/// Calls `f(binding, atom values, typed)` for every assignment of the rule's
/// variables to scene objects, in odometer order (last variable fastest).
/// `typed` is false when a non-negated class atom names an object of another
/// class; such bindings score 0. With `head`, the head variable is pinned to
/// that object index.
pub(crate) fn for_each_binding(
    c: &Compiled<'_>,
    scene: &Scene,
    relations: &RelationTable,
    head: Option<usize>,
    mut f: impl FnMut(&[usize], &[f64], bool),
) -> Result<(), LogicError> {
    let objs = scene.objects();
    let n = objs.len();
    let k = c.vars.len();
    if n == 0 {
        return Ok(());
    }
    let mut idx = alloc::vec![0usize; k];
    if let Some(h) = head {
        idx[0] = h;
    }
    let first_free = usize::from(head.is_some());
    let mut xs = alloc::vec![0.0; c.atoms.len()];
    let mut ids = [0 as ObjectId; 2];
    loop {
        let mut typed = true;
        for (x, (atom, slots)) in xs.iter_mut().zip(&c.atoms) {
            for (id, &s) in ids.iter_mut().zip(slots.iter()).take(atom.args.len()) {
                *id = objs[idx[s]].id();
            }
            if let (Some(class), false) = (atom.predicate.class(), atom.negated) {
                typed &= objs[idx[slots[0]]].class() == class;
            }
            *x = raw_value(atom, &ids[..atom.args.len()], scene, relations)?.value();
        }
        f(&idx, &xs, typed);
        let mut pos = k;
        loop {
            if pos == first_free {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn best_binding(
    rule: &Rule,
    params: &RuleParams,
    scene: &Scene,
    relations: &RelationTable,
    head: Option<usize>,
) -> Result<(FuzzyValue, Option<GroundingContext>), LogicError> {
    if rule.body.len() != params.weights.len() {
        return Err(LogicError::LengthMismatch { atoms: rule.body.len(), weights: params.weights.len() });
    }
    let c = compile(rule);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_binding(&c, scene, relations, head, |idx, xs, typed| {
        let y = if typed { FuzzyValue::new(params.affine(xs.iter().copied())).value() } else { 0.0 };
        if best.as_ref().is_none_or(|(b, _)| y > *b) {
            best = Some((y, idx.to_vec()));
        }
    })?;
    Ok(match best {
        None => (FuzzyValue::FALSE, None),
        Some((y, idx)) => {
            let objs = scene.objects();
            let ctx = GroundingContext::new(c.vars.iter().zip(idx).map(|(v, i)| (v.to_string(), objs[i].id())));
            (FuzzyValue::new(y), Some(ctx))
        }
    })
}

/// Best grounding of `rule` in `scene`: the max over every assignment of
/// variables to objects of the clamped affine conjunction. A binding that
/// puts an object under a (non-negated) class atom of another class scores 0,
/// so a rule about suspected areas never fires in a scene without one. Ties
/// keep the first binding in enumeration order. A scene without objects
/// scores 0.
pub fn evaluate_rule(
    rule: &Rule,
    params: &RuleParams,
    scene: &Scene,
    relations: &RelationTable,
) -> Result<(FuzzyValue, Option<GroundingContext>), LogicError> {
    best_binding(rule, params, scene, relations, None)
}

/// [`evaluate_rule`] with the head variable fixed to object `head`.
pub fn evaluate_rule_for_head(
    rule: &Rule,
    params: &RuleParams,
    scene: &Scene,
    relations: &RelationTable,
    head: ObjectId,
) -> Result<(FuzzyValue, Option<GroundingContext>), LogicError> {
    let i = scene.objects().iter().position(|o| o.id() == head).ok_or(LogicError::UnknownObject(head))?;
    best_binding(rule, params, scene, relations, Some(i))
}

/// Result of evaluating a rule set on a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probability: FuzzyValue,
    /// Index of the highest-scoring rule (first on ties) and its binding.
    pub rule: usize,
    pub binding: Option<GroundingContext>,
    pub rule_scores: Vec<FuzzyValue>,
}

/// Max over the rules of [`evaluate_rule`].
pub fn evaluate_ruleset(
    rules: &[Rule],
    params: &[RuleParams],
    scene: &Scene,
    relations: &RelationTable,
) -> Result<Inference, LogicError> {
    if rules.is_empty() {
        return Err(LogicError::NoRules);
    }
    if rules.len() != params.len() {
        return Err(LogicError::ParamCount { rules: rules.len(), params: params.len() });
    }
    let mut best: Option<(usize, FuzzyValue, Option<GroundingContext>)> = None;
    let mut rule_scores = Vec::with_capacity(rules.len());
    for (i, (r, p)) in rules.iter().zip(params).enumerate() {
        let (y, ctx) = evaluate_rule(r, p, scene, relations)?;
        rule_scores.push(y);
        if best.as_ref().is_none_or(|(_, b, _)| y > *b) {
            best = Some((i, y, ctx));
        }
    }
    let (rule, probability, binding) = best.expect("at least one rule");
    Ok(Inference { probability, rule, binding, rule_scores })
}
