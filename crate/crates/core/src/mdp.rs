//! Finite MDPs that are skip-free in the negative direction on a rooted tree.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tree::{Tree, TreeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("expected action lists for {expected} states, got {got}")]
    StateCountMismatch { expected: usize, got: usize },
    #[error("state {state} has no actions")]
    EmptyActionSet { state: usize },
    #[error("state {state} has duplicate action label `{action}`")]
    DuplicateAction { state: usize, action: String },
    #[error("state {state}, action `{action}`: destination {dest} is not a state")]
    UnknownState { state: usize, action: String, dest: usize },
    #[error("state {state}, action `{action}`: invalid probability {value} to {dest}")]
    InvalidProbability { state: usize, action: String, dest: usize, value: f64 },
    #[error("state {state}, action `{action}`: non-finite cost {value}")]
    InvalidCost { state: usize, action: String, value: f64 },
    #[error("state {state}, action `{action}`: probabilities sum to {sum}")]
    RowSumError { state: usize, action: String, sum: f64 },
    #[error("state {state}, action `{action}`: transition to {dest} skips levels (not parent, self or descendant)")]
    SkipFreeViolation { state: usize, action: String, dest: usize },
    #[error("root state 0 is absorbing under action `{action}`")]
    DegenerateRoot { action: String },
    #[error("state {state} has no action with a positive probability of moving to its parent")]
    UnreachableParent { state: usize },
    #[error("state {k} is not a descendant of state {i}")]
    NotDescendant { k: usize, i: usize },
    #[error("policy has {got} entries for {expected} states")]
    PolicyLength { expected: usize, got: usize },
    #[error("policy picks action index {action} in state {state}, which has {available} actions")]
    InvalidPolicy { state: usize, action: usize, available: usize },
}

/// User-facing description of one action, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec<T> {
    pub label: String,
    pub cost: T,
    /// `(destination, probability)` pairs; repeated destinations are summed.
    pub transitions: Vec<(usize, T)>,
}

impl<T> ActionSpec<T> {
    pub fn new(label: impl Into<String>, cost: T, transitions: Vec<(usize, T)>) -> Self {
        Self { label: label.into(), cost, transitions }
    }
}

/// A validated action: transition mass is split into parent, self and descendant parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Action<T> {
    label: String,
    cost: T,
    to_parent: T,
    to_self: T,
    // sorted by destination id, zero entries dropped
    to_descendants: Vec<(usize, T)>,
}

impl<T: Scalar> Action<T> {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn cost(&self) -> T {
        self.cost
    }

    /// `p_{iρ(i)}(a)`; zero at the root.
    pub fn to_parent(&self) -> T {
        self.to_parent
    }

    /// `p_{ii}(a)`.
    pub fn to_self(&self) -> T {
        self.to_self
    }

    pub fn to_descendants(&self) -> &[(usize, T)] {
        &self.to_descendants
    }

    /// Every positive-probability destination including parent and self.
    pub fn transitions(&self, state: usize, tree: &Tree) -> Vec<(usize, T)> {
        let mut out = Vec::with_capacity(self.to_descendants.len() + 2);
        if let Some(p) = tree.parent(state) {
            if self.to_parent > T::zero() {
                out.push((p, self.to_parent));
            }
        }
        if self.to_self > T::zero() {
            out.push((state, self.to_self));
        }
        out.extend_from_slice(&self.to_descendants);
        out
    }
}

/// Stationary deterministic policy: `policy[i]` indexes into the action list of state `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn get(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn set(&mut self, state: usize, action: usize) {
        self.0[state] = action;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Recurrence structure of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainClass {
    /// Every stationary deterministic policy has a single recurrent class.
    Recurrent,
    /// Communicating but some policy leaves states unreachable.
    CommunicatingOnly,
    /// `reachable` is the fixed point of the reachability sequence from the root.
    NotCommunicating { reachable: Vec<usize> },
}

impl ChainClass {
    pub fn is_communicating(&self) -> bool {
        !matches!(self, ChainClass::NotCommunicating { .. })
    }
}

impl fmt::Display for ChainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainClass::Recurrent => write!(f, "recurrent"),
            ChainClass::CommunicatingOnly => write!(f, "communicating (not recurrent)"),
            ChainClass::NotCommunicating { reachable } => {
                write!(f, "not communicating (reachable from 0: {reachable:?})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipFreeMdp<T> {
    tree: Tree,
    actions: Vec<Vec<Action<T>>>,
}

/// Checks every skip-free model invariant on raw action specs without modifying them.
pub fn validate_skip_free<T: Scalar>(tree: &Tree, actions: &[Vec<ActionSpec<T>>]) -> Result<(), ModelError> {
    split_actions(tree, actions, false).map(|_| ())
}

fn split_actions<T: Scalar>(
    tree: &Tree,
    actions: &[Vec<ActionSpec<T>>],
    renormalize: bool,
) -> Result<Vec<Vec<Action<T>>>, ModelError> {
    let n = tree.len();
    if actions.len() != n {
        return Err(ModelError::StateCountMismatch { expected: n, got: actions.len() });
    }
    let mut out = Vec::with_capacity(n);
    for (state, specs) in actions.iter().enumerate() {
        if specs.is_empty() {
            return Err(ModelError::EmptyActionSet { state });
        }
        let mut row = Vec::with_capacity(specs.len());
        for (idx, spec) in specs.iter().enumerate() {
            if specs[..idx].iter().any(|s| s.label == spec.label) {
                return Err(ModelError::DuplicateAction { state, action: spec.label.clone() });
            }
            row.push(split_one(tree, state, spec, renormalize)?);
        }
        out.push(row);
    }

    for a in &out[0] {
        if a.to_self >= T::one() {
            return Err(ModelError::DegenerateRoot { action: a.label.clone() });
        }
    }
    for (state, row) in out.iter().enumerate().skip(1) {
        if !row.iter().any(|a| a.to_parent > T::zero()) {
            return Err(ModelError::UnreachableParent { state });
        }
    }
    Ok(out)
}

fn split_one<T: Scalar>(tree: &Tree, state: usize, spec: &ActionSpec<T>, renormalize: bool) -> Result<Action<T>, ModelError> {
    let label = || spec.label.clone();
    if !spec.cost.is_finite() {
        return Err(ModelError::InvalidCost { state, action: label(), value: spec.cost.as_f64() });
    }
    let mut merged: BTreeMap<usize, T> = BTreeMap::new();
    for &(dest, p) in &spec.transitions {
        if dest >= tree.len() {
            return Err(ModelError::UnknownState { state, action: label(), dest });
        }
        if !(p >= T::zero() && p <= T::one()) {
            return Err(ModelError::InvalidProbability { state, action: label(), dest, value: p.as_f64() });
        }
        *merged.entry(dest).or_insert_with(T::zero) += p;
    }
    let sum: T = merged.values().copied().sum();
    let dev = (sum - T::one()).abs().as_f64();
    if dev.is_nan() || dev > T::ROW_SUM_TOL {
        return Err(ModelError::RowSumError { state, action: label(), sum: sum.as_f64() });
    }
    let scale = if renormalize && dev > T::ROW_EXACT_TOL { sum } else { T::one() };

    let parent = tree.parent(state);
    let mut action = Action {
        label: label(),
        cost: spec.cost,
        to_parent: T::zero(),
        to_self: T::zero(),
        to_descendants: Vec::new(),
    };
    for (dest, p) in merged {
        if p == T::zero() {
            continue;
        }
        let p = p / scale;
        if Some(dest) == parent {
            action.to_parent = p;
        } else if dest == state {
            action.to_self = p;
        } else if tree.is_descendant(dest, state) {
            action.to_descendants.push((dest, p));
        } else {
            return Err(ModelError::SkipFreeViolation { state, action: label(), dest });
        }
    }
    Ok(action)
}

impl<T: Scalar> SkipFreeMdp<T> {
    /// Validates the model; rows within tolerance of one are renormalized.
    pub fn new(tree: Tree, actions: Vec<Vec<ActionSpec<T>>>) -> Result<Self, ModelError> {
        let actions = split_actions(&tree, &actions, true)?;
        Ok(Self { tree, actions })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn num_states(&self) -> usize {
        self.tree.len()
    }

    pub fn actions(&self, state: usize) -> &[Action<T>] {
        &self.actions[state]
    }

    pub fn action(&self, state: usize, a: usize) -> &Action<T> {
        &self.actions[state][a]
    }

    /// Re-checks the model invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        validate_skip_free(&self.tree, &self.to_specs())
    }

    /// The model as raw specs, e.g. for serialization or transformation.
    pub fn to_specs(&self) -> Vec<Vec<ActionSpec<T>>> {
        (0..self.num_states())
            .map(|i| {
                self.actions[i]
                    .iter()
                    .map(|a| ActionSpec::new(a.label.clone(), a.cost, a.transitions(i, &self.tree)))
                    .collect()
            })
            .collect()
    }

    /// Upper-tail probability `p̄_ik(a)`: mass landing in the subtree `T(k)`.
    pub fn upper_tail(&self, i: usize, a: usize, k: usize) -> Result<T, ModelError> {
        if !self.tree.is_descendant(k, i) {
            return Err(ModelError::NotDescendant { k, i });
        }
        Ok(self.actions[i][a]
            .to_descendants
            .iter()
            .filter(|(j, _)| self.tree.in_subtree(*j, k))
            .map(|&(_, p)| p)
            .sum())
    }

    /// Recurrent if every action of every non-root state can move to the parent
    /// and no action is absorbing; otherwise decided by reachability from the root.
    pub fn classify(&self) -> ChainClass {
        let recurrent = (0..self.num_states()).all(|i| {
            self.actions[i]
                .iter()
                .all(|a| a.to_self < T::one() && (i == 0 || a.to_parent > T::zero()))
        });
        if recurrent {
            return ChainClass::Recurrent;
        }
        // Every state reaches its parent under some action, so communicating
        // reduces to every state being reachable from the root.
        let n = self.num_states();
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                for a in &self.actions[i] {
                    for (j, _) in a.transitions(i, &self.tree) {
                        if !seen[j] {
                            seen[j] = true;
                            next.push(j);
                        }
                    }
                }
            }
            frontier = next;
        }
        if seen.iter().all(|&s| s) {
            ChainClass::CommunicatingOnly
        } else {
            ChainClass::NotCommunicating { reachable: (0..n).filter(|&i| seen[i]).collect() }
        }
    }

    /// Number of stationary deterministic policies, saturating.
    pub fn policy_count(&self) -> u128 {
        self.actions.iter().fold(1u128, |acc, row| acc.saturating_mul(row.len() as u128))
    }

    /// The policy choosing the first action everywhere.
    pub fn first_policy(&self) -> Policy {
        Policy(vec![0; self.num_states()])
    }

    pub fn check_policy(&self, d: &Policy) -> Result<(), ModelError> {
        if d.len() != self.num_states() {
            return Err(ModelError::PolicyLength { expected: self.num_states(), got: d.len() });
        }
        for (state, &action) in d.as_slice().iter().enumerate() {
            let available = self.actions[state].len();
            if action >= available {
                return Err(ModelError::InvalidPolicy { state, action, available });
            }
        }
        Ok(())
    }

    /// Labels of the actions chosen by `d`.
    pub fn policy_labels(&self, d: &Policy) -> Vec<&str> {
        d.as_slice().iter().enumerate().map(|(i, &a)| self.actions[i][a].label()).collect()
    }

    /// Same model in another scalar type.
    pub fn cast<U: Scalar>(&self) -> SkipFreeMdp<U> {
        let conv = |v: T| U::lit(v.as_f64());
        SkipFreeMdp {
            tree: self.tree.clone(),
            actions: self
                .actions
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|a| Action {
                            label: a.label.clone(),
                            cost: conv(a.cost),
                            to_parent: conv(a.to_parent),
                            to_self: conv(a.to_self),
                            to_descendants: a.to_descendants.iter().map(|&(j, p)| (j, conv(p))).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(label: &str, cost: f64, tr: &[(usize, f64)]) -> ActionSpec<f64> {
        ActionSpec::new(label, cost, tr.to_vec())
    }

    fn two_state() -> SkipFreeMdp<f64> {
        SkipFreeMdp::new(
            Tree::chain(1),
            vec![
                vec![spec("a", 0.0, &[(0, 0.5), (1, 0.5)])],
                vec![spec("a", 2.0, &[(0, 0.5), (1, 0.5)]), spec("b", 2.4, &[(0, 1.0)])],
            ],
        )
        .unwrap()
    }

    #[test]
    fn skipping_a_level_is_rejected() {
        let err = SkipFreeMdp::new(
            Tree::chain(2),
            vec![
                vec![spec("a", 0.0, &[(1, 1.0)])],
                vec![spec("a", 0.0, &[(0, 1.0)])],
                vec![spec("a", 0.0, &[(0, 0.5), (2, 0.5)])],
            ],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::SkipFreeViolation { state: 2, action: "a".into(), dest: 0 });
    }

    #[test]
    fn absorbing_root_is_rejected() {
        let err = SkipFreeMdp::new(
            Tree::chain(1),
            vec![vec![spec("a", 0.0, &[(0, 1.0)])], vec![spec("a", 0.0, &[(0, 1.0)])]],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::DegenerateRoot { action: "a".into() });
    }

    #[test]
    fn row_sums() {
        let bad = vec![vec![spec("a", 0.0, &[(1, 0.9)])], vec![spec("a", 0.0, &[(0, 1.0)])]];
        assert!(matches!(
            SkipFreeMdp::new(Tree::chain(1), bad).unwrap_err(),
            ModelError::RowSumError { state: 0, .. }
        ));
        // within 1e-9: accepted and renormalized
        let close = vec![
            vec![spec("a", 0.0, &[(0, 0.5), (1, 0.5 + 5e-10)])],
            vec![spec("a", 0.0, &[(0, 1.0)])],
        ];
        let m = SkipFreeMdp::new(Tree::chain(1), close).unwrap();
        let a = m.action(0, 0);
        assert!((a.to_self() + a.to_descendants()[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unreachable_parent_and_empty_actions() {
        let err = SkipFreeMdp::new(
            Tree::chain(1),
            vec![vec![spec("a", 0.0, &[(1, 1.0)])], vec![spec("a", 0.0, &[(1, 1.0)])]],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::UnreachableParent { state: 1 });
        let err = SkipFreeMdp::<f64>::new(Tree::chain(1), vec![vec![spec("a", 0.0, &[(1, 1.0)])], vec![]]).unwrap_err();
        assert_eq!(err, ModelError::EmptyActionSet { state: 1 });
    }

    #[test]
    fn worked_model_validates() {
        let m = two_state();
        assert!(m.validate().is_ok());
        assert_eq!(m.classify(), ChainClass::Recurrent);
        assert_eq!(m.policy_count(), 2);
    }

    #[test]
    fn upper_tail_star() {
        // 0 has children {1, 2}; 3 is a child of 1
        let tree = Tree::from_parents(&[0, 0, 1]).unwrap();
        let back = |p| vec![spec("a", 0.0, &[(p, 1.0)])];
        let m = SkipFreeMdp::new(
            tree,
            vec![vec![spec("a", 0.0, &[(1, 0.3), (3, 0.2), (0, 0.5)])], back(0), back(0), back(1)],
        )
        .unwrap();
        assert!((m.upper_tail(0, 0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.upper_tail(0, 0, 3).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(m.upper_tail(0, 0, 2).unwrap(), 0.0);
        assert_eq!(m.upper_tail(1, 0, 2).unwrap_err(), ModelError::NotDescendant { k: 2, i: 1 });
    }

    #[test]
    fn upper_tail_on_chain_is_tail_sum() {
        let m = SkipFreeMdp::new(
            Tree::chain(3),
            vec![
                vec![spec("a", 0.0, &[(0, 0.1), (1, 0.2), (2, 0.3), (3, 0.4)])],
                vec![spec("a", 0.0, &[(0, 1.0)])],
                vec![spec("a", 0.0, &[(1, 1.0)])],
                vec![spec("a", 0.0, &[(2, 1.0)])],
            ],
        )
        .unwrap();
        for (k, expect) in [(1, 0.9), (2, 0.7), (3, 0.4)] {
            assert!((m.upper_tail(0, 0, k).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn classification() {
        assert_eq!(two_state().classify(), ChainClass::Recurrent);

        // state 1 has an action with no parent transition, but everything stays reachable
        let comm = SkipFreeMdp::new(
            Tree::chain(2),
            vec![
                vec![spec("a", 0.0, &[(1, 1.0)])],
                vec![spec("a", 0.0, &[(0, 1.0)]), spec("b", 0.0, &[(2, 1.0)])],
                vec![spec("a", 0.0, &[(1, 1.0)])],
            ],
        )
        .unwrap();
        assert_eq!(comm.classify(), ChainClass::CommunicatingOnly);
    }

    #[test]
    fn not_communicating_witness() {
        // p_00 < 1 forces the root to reach some child, so the smallest possible
        // fixed point is {0, 1}: here state 1 never moves up to 2.
        let m = SkipFreeMdp::new(
            Tree::chain(2),
            vec![
                vec![spec("a", 0.0, &[(0, 0.5), (1, 0.5)])],
                vec![spec("a", 0.0, &[(0, 1.0)])],
                vec![spec("a", 0.0, &[(1, 1.0)])],
            ],
        )
        .unwrap();
        assert_eq!(m.classify(), ChainClass::Recurrent);
        let m = SkipFreeMdp::new(
            Tree::chain(2),
            vec![
                vec![spec("a", 0.0, &[(0, 0.5), (1, 0.5)])],
                vec![spec("a", 0.0, &[(0, 1.0)]), spec("b", 0.0, &[(1, 1.0)])],
                vec![spec("a", 0.0, &[(1, 1.0)])],
            ],
        )
        .unwrap();
        assert_eq!(m.classify(), ChainClass::NotCommunicating { reachable: vec![0, 1] });
    }

    #[test]
    fn cast_round_trip() {
        let m = two_state();
        let back: SkipFreeMdp<f64> = m.cast::<f32>().cast();
        assert_eq!(back.action(1, 1).to_parent(), 1.0);
        assert_eq!(back.num_states(), 2);
    }
}
