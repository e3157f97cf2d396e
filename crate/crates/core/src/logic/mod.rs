//! Weighted fuzzy rules over scene detections.
//!
//! Rules are written as
//!
//! ```text
//! OilArea(A) <- SuspectedArea(A) & Ground(B) & On(A,B).
//! ```
//!
//! Each body atom gets a truth degree in `[0, 1]` (detection confidence for
//! class predicates, relation probability for `On` / `Around`), the
//! conjunction is the clamped affine map `clamp(Σ bᵢxᵢ + c, 0, 1)`, a rule
//! scores the best grounding of its variables, and a rule set scores the max
//! over its rules.

mod ground;
mod parse;
mod train;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::relnet::RelationLabel;
use crate::scene::{ClassLabel, ObjectId};

pub use ground::{
    atom_probability, evaluate_rule, evaluate_rule_for_head, evaluate_ruleset, GroundingContext, Inference,
    RelationTable,
};
pub use parse::{format_rules, parse_rules, ParseError, ParseErrorKind};
pub use train::{
    ground_scene, init_rule_params, ruleset_loss_and_grad, train_rule_params, GroundedScene, RuleTrainConfig,
    BCE_EPSILON,
};

/// Longest rule body accepted.
pub const MAX_BODY_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("fuzzy or of an empty list")]
    EmptyDisjunction,
    #[error("rule has {atoms} body atoms but {weights} weights")]
    LengthMismatch { atoms: usize, weights: usize },
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("object {0} is not in the scene")]
    UnknownObject(ObjectId),
    #[error("no relation prediction for pair ({0}, {1})")]
    MissingRelation(ObjectId, ObjectId),
    #[error("rule set is empty")]
    NoRules,
    #[error("{rules} rules but {params} parameter sets")]
    ParamCount { rules: usize, params: usize },
    #[error("training scenes carry a single label")]
    SingleClass,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite loss at step {0}")]
    NonFinite(usize),
}

/// A truth degree, clamped into `[0, 1]` on construction (NaN maps to 0).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct FuzzyValue(f64);

impl FuzzyValue {
    pub const FALSE: FuzzyValue = FuzzyValue(0.0);
    pub const TRUE: FuzzyValue = FuzzyValue(1.0);

    pub fn new(x: f64) -> Self {
        if x.is_nan() {
            Self(0.0)
        } else {
            Self(x.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<FuzzyValue> for f64 {
    fn from(v: FuzzyValue) -> f64 {
        v.0
    }
}

pub fn fuzzy_not(x: FuzzyValue) -> FuzzyValue {
    FuzzyValue(1.0 - x.0)
}

/// Max of the inputs.
pub fn fuzzy_or(xs: &[FuzzyValue]) -> Result<FuzzyValue, LogicError> {
    xs.iter().copied().reduce(|a, b| if b.0 > a.0 { b } else { a }).ok_or(LogicError::EmptyDisjunction)
}

/// `clamp(Σ bᵢxᵢ + c, 0, 1)`.
pub fn fuzzy_and(xs: &[FuzzyValue], params: &RuleParams) -> Result<FuzzyValue, LogicError> {
    if xs.len() != params.weights.len() {
        return Err(LogicError::LengthMismatch { atoms: xs.len(), weights: params.weights.len() });
    }
    Ok(FuzzyValue::new(params.affine(xs.iter().map(|x| x.0))))
}

/// Conjunction weights `b₁..bₙ` (aligned with the body atoms) and bias `c`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RuleParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RuleParams {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    /// `[b₁, .., bₙ, c]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    /// Inverse of [`RuleParams::to_flat`]; `None` for an empty slice.
    pub fn from_flat(flat: &[f64]) -> Option<Self> {
        let (&bias, weights) = flat.split_last()?;
        Some(Self { weights: weights.to_vec(), bias })
    }

    pub(crate) fn affine(&self, xs: impl Iterator<Item = f64>) -> f64 {
        self.weights.iter().zip(xs).fold(self.bias, |acc, (b, x)| acc + b * x)
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// Body predicates known to the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predicate {
    SuspectedArea,
    Ground,
    OilStorageDevice,
    On,
    Around,
}

impl Predicate {
    pub const ALL: [Predicate; 5] =
        [Predicate::SuspectedArea, Predicate::Ground, Predicate::OilStorageDevice, Predicate::On, Predicate::Around];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::SuspectedArea => "SuspectedArea",
            Predicate::Ground => "Ground",
            Predicate::OilStorageDevice => "OilStorageDevice",
            Predicate::On => "On",
            Predicate::Around => "Around",
        }
    }

    /// Case-insensitive lookup.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(name))
    }

    pub fn arity(self) -> usize {
        match self {
            Predicate::On | Predicate::Around => 2,
            _ => 1,
        }
    }

    /// Detection class tested by a unary predicate.
    pub fn class(self) -> Option<ClassLabel> {
        match self {
            Predicate::SuspectedArea => Some(ClassLabel::SuspectedArea),
            Predicate::Ground => Some(ClassLabel::Ground),
            Predicate::OilStorageDevice => Some(ClassLabel::OilStorageDevice),
            _ => None,
        }
    }

    /// Relation read off the classifier by a binary predicate.
    pub fn relation(self) -> Option<RelationLabel> {
        match self {
            Predicate::On => Some(RelationLabel::Above),
            Predicate::Around => Some(RelationLabel::Nearby),
            _ => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub predicate: Predicate,
    pub args: Vec<String>,
    pub negated: bool,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

/// The conclusion of a rule: a free predicate name over one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub name: String,
    pub var: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Atom>,
}

impl Rule {
    /// Distinct variables, head variable first, then in body order.
    pub fn vars(&self) -> Vec<&str> {
        let mut vars: Vec<&str> = alloc::vec![self.head.var.as_str()];
        for a in &self.body {
            for v in &a.args {
                if !vars.contains(&v.as_str()) {
                    vars.push(v);
                }
            }
        }
        vars
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) <- ", self.head.name, self.head.var)?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(".")
    }
}
