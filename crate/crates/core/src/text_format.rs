//! TOML model files.
//!
//! ```toml
//! kind = "dtmdp"          # or "ctmdp"
//! parents = [0, 1]        # parent of state 1, 2, ...
//! actions = [["a"], ["a", "b"], ["a"]]
//! discount = 0.9          # optional
//!
//! [[transitions]]
//! state = 0
//! action = "a"
//! dest = 1
//! prob = 1.0              # `rate` for ctmdp
//!
//! [[costs]]
//! state = 0
//! action = "a"
//! value = 5.0
//! ```
//!
//! Every (state, action) pair needs exactly one cost record. Transitions not
//! listed have probability (rate) zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::mdp::{ActionSpec, ModelError, SkipFreeMdp};
use crate::transforms::{CtMdp, RateAction, TransformError};
use crate::tree::Tree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("parse error: {0}")]
    Syntax(String),
    #[error("unknown kind {0:?}, expected \"dtmdp\" or \"ctmdp\"")]
    Kind(String),
    #[error("{kind} transition records need a `{field}` field")]
    MissingField { kind: &'static str, field: &'static str },
    #[error("state {state}: unknown action {action:?}")]
    UnknownAction { state: usize, action: String },
    #[error("record refers to state {state}, model has {states} states")]
    UnknownState { state: usize, states: usize },
    #[error("state {state} action {action:?}: no cost given")]
    MissingCost { state: usize, action: String },
    #[error("state {state} action {action:?}: cost given twice")]
    DuplicateCost { state: usize, action: String },
    #[error("state {state} action {action:?}: transition to {dest} given twice")]
    DuplicateTransition { state: usize, action: String, dest: usize },
    #[error("discount must lie in (0, 1), got {0}")]
    BadDiscount(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Discrete(SkipFreeMdp<f64>),
    Continuous(CtMdp<f64>),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Discrete(_) => "dtmdp",
            Model::Continuous(_) => "ctmdp",
        }
    }

    pub fn tree(&self) -> &Tree {
        match self {
            Model::Discrete(m) => m.tree(),
            Model::Continuous(m) => m.tree(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub discount: Option<f64>,
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        Self { model, discount: None }
    }
}

impl From<SkipFreeMdp<f64>> for ModelFile {
    fn from(m: SkipFreeMdp<f64>) -> Self {
        Self::new(Model::Discrete(m))
    }
}

impl From<CtMdp<f64>> for ModelFile {
    fn from(m: CtMdp<f64>) -> Self {
        Self::new(Model::Continuous(m))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl From<Number> for f64 {
    fn from(n: Number) -> f64 {
        match n {
            Number::Int(i) => i as f64,
            Number::Float(x) => x,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: String,
    #[serde(default)]
    parents: Vec<usize>,
    actions: Vec<Vec<String>>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    #[serde(default)]
    costs: Vec<RawCost>,
    discount: Option<Number>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    state: usize,
    action: String,
    dest: usize,
    prob: Option<Number>,
    rate: Option<Number>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    state: usize,
    action: String,
    value: Number,
}

/// Per-(state, action) label, cost and weighted destinations, in file order.
type Rows = Vec<Vec<(String, f64, Vec<(usize, f64)>)>>;

pub fn parse_model(text: &str) -> Result<ModelFile, FormatError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| FormatError::Syntax(e.message().to_string()))?;
    let continuous = match raw.kind.as_str() {
        "dtmdp" => false,
        "ctmdp" => true,
        other => return Err(FormatError::Kind(other.to_string())),
    };
    let tree = Tree::from_parents(&raw.parents).map_err(ModelError::from)?;
    let n = tree.len();
    if raw.actions.len() != n {
        return Err(ModelError::StateCountMismatch { expected: n, got: raw.actions.len() }.into());
    }
    let lookup = |state: usize, action: &str| -> Result<usize, FormatError> {
        if state >= n {
            return Err(FormatError::UnknownState { state, states: n });
        }
        raw.actions[state]
            .iter()
            .position(|l| l == action)
            .ok_or_else(|| FormatError::UnknownAction { state, action: action.to_string() })
    };

    let mut costs: Vec<Vec<Option<f64>>> = raw.actions.iter().map(|r| vec![None; r.len()]).collect();
    for c in raw.costs {
        let a = lookup(c.state, &c.action)?;
        if costs[c.state][a].replace(c.value.into()).is_some() {
            return Err(FormatError::DuplicateCost { state: c.state, action: c.action });
        }
    }
    let mut rows: Rows = Vec::with_capacity(n);
    for (state, labels) in raw.actions.iter().enumerate() {
        let mut row = Vec::with_capacity(labels.len());
        for (a, label) in labels.iter().enumerate() {
            let cost = costs[state][a].ok_or_else(|| FormatError::MissingCost { state, action: label.clone() })?;
            row.push((label.clone(), cost, Vec::new()));
        }
        rows.push(row);
    }
    let mut seen = BTreeMap::new();
    for t in raw.transitions {
        let a = lookup(t.state, &t.action)?;
        if t.dest >= n {
            return Err(ModelError::UnknownState { state: t.state, action: t.action, dest: t.dest }.into());
        }
        let (field, value) = if continuous { ("rate", t.rate) } else { ("prob", t.prob) };
        let value = value.ok_or(FormatError::MissingField { kind: raw_kind(continuous), field })?;
        if seen.insert((t.state, a, t.dest), ()).is_some() {
            return Err(FormatError::DuplicateTransition { state: t.state, action: t.action, dest: t.dest });
        }
        rows[t.state][a].2.push((t.dest, value.into()));
    }

    let discount = raw.discount.map(f64::from);
    if let Some(b) = discount {
        if !(b > 0.0 && b < 1.0) {
            return Err(FormatError::BadDiscount(b));
        }
    }
    let model = if continuous {
        let actions = rows.into_iter().map(|r| r.into_iter().map(|(l, c, tr)| RateAction::new(l, c, tr)).collect()).collect();
        Model::Continuous(CtMdp::new(tree, actions)?)
    } else {
        let specs = rows.into_iter().map(|r| r.into_iter().map(|(l, c, tr)| ActionSpec::new(l, c, tr)).collect()).collect();
        Model::Discrete(SkipFreeMdp::new(tree, specs)?)
    };
    Ok(ModelFile { model, discount })
}

fn raw_kind(continuous: bool) -> &'static str {
    if continuous {
        "ctmdp"
    } else {
        "dtmdp"
    }
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Deterministic text with shortest round-trip float formatting, so that
/// `parse_model(&emit_model(f)) == f`.
pub fn emit_model(file: &ModelFile) -> String {
    let tree = file.model.tree();
    let (field, rows): (&str, Rows) = match &file.model {
        Model::Discrete(m) => (
            "prob",
            m.to_specs().into_iter().map(|r| r.into_iter().map(|s| (s.label, s.cost, s.transitions)).collect()).collect(),
        ),
        Model::Continuous(m) => (
            "rate",
            (0..m.num_states())
                .map(|i| m.actions(i).iter().map(|a| (a.label.clone(), a.cost_rate, a.rates.clone())).collect())
                .collect(),
        ),
    };
    let mut out = String::new();
    let _ = writeln!(out, "kind = {}", quote(file.model.kind()));
    let parents: Vec<String> = tree.parent_list().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "parents = [{}]", parents.join(", "));
    let labels: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|(l, _, _)| quote(l)).collect::<Vec<_>>().join(", ")))
        .collect();
    let _ = writeln!(out, "actions = [{}]", labels.join(", "));
    if let Some(b) = file.discount {
        let _ = writeln!(out, "discount = {b:?}");
    }
    for (state, row) in rows.iter().enumerate() {
        for (label, _, tr) in row {
            for (dest, p) in tr {
                let _ = write!(out, "\n[[transitions]]\nstate = {state}\naction = {}\ndest = {dest}\n{field} = {p:?}\n", quote(label));
            }
        }
    }
    for (state, row) in rows.iter().enumerate() {
        for (label, cost, _) in row {
            let _ = write!(out, "\n[[costs]]\nstate = {state}\naction = {}\nvalue = {cost:?}\n", quote(label));
        }
    }
    out
}
