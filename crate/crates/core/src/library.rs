//! Example model families and seeded random instance generators.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::{ActionSpec, ChainClass, ModelError, SkipFreeMdp};
use crate::scalar::Scalar;
use crate::transforms::{CtMdp, RateAction, TransformError};
use crate::tree::Tree;

/// Default bound on the number of queue states.
pub const MAX_QUEUE_STATES: usize = 100_000;
/// Lower bound on every probability the random generator requires to be positive.
pub const PROB_FLOOR: f64 = 0.05;
/// Resampling attempts before [`random_skip_free`] gives up.
pub const MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LibraryError {
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
    #[error("queue would have {states} states, limit is {limit}")]
    CapacityOverflow { states: u128, limit: usize },
    #[error("no instance of the requested class after {0} attempts")]
    GenerationFailed(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Cost rate of a queue state `(i_1, …, i_M)` under an action index.
pub type CostFn<T> = Arc<dyn Fn(&[usize], usize) -> T + Send + Sync>;

/// Single-server queue with `classes` job classes and room for `capacity` jobs.
#[derive(Clone)]
pub struct QueueSpec<T> {
    pub classes: usize,
    pub capacity: usize,
    /// Arrival rate of each class.
    pub lambda: Vec<T>,
    pub actions: Vec<String>,
    /// `mu[k][a]`: service rate of a class `k + 1` job under action `a`.
    pub mu: Vec<Vec<T>>,
    pub cost: CostFn<T>,
    pub max_states: usize,
}

impl<T: fmt::Debug> fmt::Debug for QueueSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QueueSpec")
            .field("classes", &self.classes)
            .field("capacity", &self.capacity)
            .field("lambda", &self.lambda)
            .field("actions", &self.actions)
            .field("mu", &self.mu)
            .field("max_states", &self.max_states)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> QueueSpec<T> {
    /// Spec with the default cost: number of jobs present, no service cost.
    pub fn new(classes: usize, capacity: usize, lambda: Vec<T>, actions: Vec<String>, mu: Vec<Vec<T>>) -> Self {
        let n = actions.len();
        Self { classes, capacity, lambda, actions, mu, cost: holding_cost(vec![T::zero(); n]), max_states: MAX_QUEUE_STATES }
    }

    /// Holding cost equal to the queue length plus `service_cost[a]`.
    pub fn with_service_costs(mut self, service_cost: Vec<T>) -> Self {
        self.cost = holding_cost(service_cost);
        self
    }

    pub fn with_cost(mut self, cost: CostFn<T>) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_max_states(mut self, max_states: usize) -> Self {
        self.max_states = max_states;
        self
    }

    /// `Σ_{m=0}^{M} K^m`, or `None` on overflow.
    pub fn state_count(&self) -> Option<u128> {
        let mut total: u128 = 0;
        let mut level: u128 = 1;
        for _ in 0..=self.capacity {
            total = total.checked_add(level)?;
            level = level.checked_mul(self.classes as u128)?;
        }
        Some(total)
    }

    fn check(&self) -> Result<(), LibraryError> {
        let bad = |msg: String| Err(LibraryError::InvalidSpec(msg));
        if self.classes == 0 || self.capacity == 0 {
            return bad("class count and capacity must be at least 1".into());
        }
        if self.actions.is_empty() {
            return bad("action list is empty".into());
        }
        if self.lambda.len() != self.classes || self.mu.len() != self.classes {
            return bad(format!("expected {} arrival rates and service-rate rows", self.classes));
        }
        if self.lambda.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return bad("arrival rates must be positive".into());
        }
        for row in &self.mu {
            if row.len() != self.actions.len() || row.iter().any(|&m| !(m > T::zero() && m.is_finite())) {
                return bad("each class needs one positive service rate per action".into());
            }
        }
        Ok(())
    }
}

fn holding_cost<T: Scalar>(service_cost: Vec<T>) -> CostFn<T> {
    Arc::new(move |state: &[usize], a: usize| {
        T::lit(state.iter().filter(|&&k| k != 0).count() as f64) + service_cost.get(a).copied().unwrap_or_else(T::zero)
    })
}

/// Queue model with the class vector of every state.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel<T> {
    pub ct: CtMdp<T>,
    /// `states[i]` is `(i_1, …, i_M)`, with 0 marking an empty slot.
    pub states: Vec<Vec<usize>>,
}

impl<T> QueueModel<T> {
    pub fn index_of(&self, state: &[usize]) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Display label `(i_1,…,i_M)`.
pub fn state_label(state: &[usize]) -> String {
    let parts: Vec<String> = state.iter().map(|k| k.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Builds the multi-class queue. A service completion removes `i_1` and moves
/// to the parent `(i_2, …, i_M, 0)`; a class `k` arrival moves to the child
/// `(k, i_1, …, i_{M-1})` unless the queue is full.
pub fn make_multiclass_queue<T: Scalar>(spec: &QueueSpec<T>) -> Result<QueueModel<T>, LibraryError> {
    spec.check()?;
    let count = spec.state_count().unwrap_or(u128::MAX);
    if count > spec.max_states as u128 {
        return Err(LibraryError::CapacityOverflow { states: count, limit: spec.max_states });
    }
    let m = spec.capacity;
    let mut states = vec![vec![0; m]];
    let mut parents = Vec::new();
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    // depth-first, children ordered by arriving class
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        let state = states[node].clone();
        if state[m - 1] != 0 {
            continue;
        }
        for k in 1..=spec.classes {
            let mut child = Vec::with_capacity(m);
            child.push(k);
            child.extend_from_slice(&state[..m - 1]);
            let id = states.len();
            states.push(child);
            parents.push(node);
            children.push(Vec::new());
            children[node].push(id);
        }
        stack.extend(children[node].iter().rev());
    }
    // renumber in preorder so ids follow the depth-first order
    let mut order = Vec::with_capacity(states.len());
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        order.push(node);
        stack.extend(children[node].iter().rev());
    }
    let mut new_id = vec![0; states.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    let mut new_parents = vec![0; states.len() - 1];
    for (k, &p) in parents.iter().enumerate() {
        new_parents[new_id[k + 1] - 1] = new_id[p];
    }
    let states: Vec<Vec<usize>> = order.iter().map(|&old| states[old].clone()).collect();
    let tree = Tree::from_parents(&new_parents).map_err(ModelError::from)?;

    let actions = (0..states.len())
        .map(|i| {
            let s = &states[i];
            spec.actions
                .iter()
                .enumerate()
                .map(|(a, label)| {
                    let mut rates = Vec::new();
                    if let Some(p) = tree.parent(i) {
                        rates.push((p, spec.mu[s[0] - 1][a]));
                    }
                    for (k, &c) in tree.children(i).iter().enumerate() {
                        rates.push((c, spec.lambda[k]));
                    }
                    RateAction::new(label.clone(), (spec.cost)(s, a), rates)
                })
                .collect()
        })
        .collect();
    Ok(QueueModel { ct: CtMdp::new(tree, actions)?, states })
}

/// One controllable action of a birth-death chain. Weights are probabilities
/// for [`make_birth_death`] and rates for [`make_birth_death_rates`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepAction<T> {
    pub label: String,
    pub up: T,
    pub stay: T,
    pub down: T,
    pub cost: T,
}

impl<T> StepAction<T> {
    pub fn new(label: impl Into<String>, up: T, stay: T, down: T, cost: T) -> Self {
        Self { label: label.into(), up, stay, down, cost }
    }
}

/// Label, cost and weighted destinations of each (state, action).
type StepRows<T> = Vec<Vec<(String, T, Vec<(usize, T)>)>>;

fn step_rows<T: Scalar>(actions: &[Vec<StepAction<T>>]) -> Result<StepRows<T>, LibraryError> {
    if actions.len() < 2 {
        return Err(LibraryError::InvalidSpec("a birth-death chain needs at least two states".into()));
    }
    let top = actions.len() - 1;
    actions
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|a| {
                    if i == 0 && a.down != T::zero() {
                        return Err(LibraryError::InvalidSpec(format!("state 0 action {:?} moves down", a.label)));
                    }
                    if i == top && a.up != T::zero() {
                        return Err(LibraryError::InvalidSpec(format!("state {i} action {:?} moves up", a.label)));
                    }
                    let mut tr = Vec::new();
                    if i > 0 {
                        tr.push((i - 1, a.down));
                    }
                    tr.push((i, a.stay));
                    if i < top {
                        tr.push((i + 1, a.up));
                    }
                    Ok((a.label.clone(), a.cost, tr))
                })
                .collect()
        })
        .collect()
}

/// Discrete-time random walk on `0–1–⋯–M` with `actions.len() = M + 1`.
pub fn make_birth_death<T: Scalar>(actions: &[Vec<StepAction<T>>]) -> Result<SkipFreeMdp<T>, LibraryError> {
    let rows = step_rows(actions)?;
    let specs = rows
        .into_iter()
        .map(|row| row.into_iter().map(|(l, c, tr)| ActionSpec::new(l, c, tr)).collect())
        .collect();
    Ok(SkipFreeMdp::new(Tree::chain(actions.len() - 1), specs)?)
}

/// Continuous-time birth-death process; `cost` is a cost rate.
pub fn make_birth_death_rates<T: Scalar>(actions: &[Vec<StepAction<T>>]) -> Result<CtMdp<T>, LibraryError> {
    let rows = step_rows(actions)?;
    let rates = rows
        .into_iter()
        .map(|row| row.into_iter().map(|(l, c, tr)| RateAction::new(l, c, tr)).collect())
        .collect();
    Ok(CtMdp::new(Tree::chain(actions.len() - 1), rates)?)
}

/// Requested chain class of a random instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceClass {
    Recurrent,
    /// Communicating but not recurrent.
    Communicating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    /// Deepest level of the tree.
    pub depth: usize,
    /// Maximum children per node; 1 gives a chain with `depth + 1` states.
    pub branching: usize,
    pub max_states: usize,
    /// Each state gets between 1 and this many actions.
    pub actions_per_state: usize,
    pub class: InstanceClass,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { depth: 3, branching: 2, max_states: 10, actions_per_state: 3, class: InstanceClass::Recurrent }
    }
}

impl RandomSpec {
    pub fn chain(states: usize) -> Self {
        Self { depth: states.saturating_sub(1), branching: 1, max_states: states, ..Self::default() }
    }

    pub fn with_class(mut self, class: InstanceClass) -> Self {
        self.class = class;
        self
    }

    pub fn with_actions(mut self, actions_per_state: usize) -> Self {
        self.actions_per_state = actions_per_state;
        self
    }

    fn check(&self) -> Result<(), LibraryError> {
        if self.depth == 0 || self.branching == 0 || self.max_states < 2 || self.actions_per_state == 0 {
            return Err(LibraryError::InvalidSpec("need depth, branching and actions ≥ 1 and at least 2 states".into()));
        }
        Ok(())
    }
}

fn random_tree(rng: &mut ChaCha8Rng, spec: &RandomSpec) -> Tree {
    let mut parents = Vec::new();
    let mut level = vec![0usize];
    let mut count = 1;
    for _ in 0..spec.depth {
        let mut next = Vec::new();
        for &node in &level {
            let lo = usize::from(node == 0);
            let kids = if spec.branching == 1 { 1 } else { rng.gen_range(lo..=spec.branching) };
            for _ in 0..kids {
                if count == spec.max_states {
                    break;
                }
                parents.push(node);
                next.push(count);
                count += 1;
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Tree::from_parents(&parents).expect("generated parents are acyclic")
}

/// Probabilities on `support`, each at least [`PROB_FLOOR`].
fn floored_weights(rng: &mut ChaCha8Rng, support: &[usize]) -> Vec<(usize, f64)> {
    let w: Vec<f64> = support.iter().map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let free = 1.0 - PROB_FLOOR * support.len() as f64;
    support.iter().zip(&w).map(|(&j, &x)| (j, PROB_FLOOR + free * x / total)).collect()
}

/// Destinations of one random action: parent (if any), self, and a few descendants.
fn random_support(rng: &mut ChaCha8Rng, tree: &Tree, i: usize, class: InstanceClass) -> Vec<usize> {
    let mut support = Vec::new();
    if let Some(p) = tree.parent(i) {
        if class == InstanceClass::Recurrent || rng.gen_bool(0.6) {
            support.push(p);
        }
    }
    if rng.gen_bool(0.5) {
        support.push(i);
    }
    let desc = tree.descendants(i);
    if !desc.is_empty() {
        let want = if i == 0 { rng.gen_range(1..=desc.len().min(3)) } else { rng.gen_range(0..=desc.len().min(3)) };
        let mut picks: Vec<usize> = desc.choose_multiple(rng, want).copied().collect();
        picks.sort_unstable();
        support.extend(picks);
    }
    if support.is_empty() {
        support.push(i);
    }
    support
}

/// Random skip-free model, deterministic in `seed`. Costs are uniform on `[0, 10]`.
pub fn random_skip_free(seed: u64, spec: &RandomSpec) -> Result<SkipFreeMdp<f64>, LibraryError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RETRIES {
        let tree = random_tree(&mut rng, spec);
        let specs = (0..tree.len())
            .map(|i| {
                let count = rng.gen_range(1..=spec.actions_per_state);
                (0..count)
                    .map(|a| {
                        let support = random_support(&mut rng, &tree, i, spec.class);
                        let tr = floored_weights(&mut rng, &support);
                        ActionSpec::new(((b'a' + a as u8) as char).to_string(), rng.gen_range(0.0..=10.0), tr)
                    })
                    .collect()
            })
            .collect();
        let Ok(mdp) = SkipFreeMdp::new(tree, specs) else { continue };
        let ok = matches!(
            (spec.class, mdp.classify()),
            (InstanceClass::Recurrent, ChainClass::Recurrent) | (InstanceClass::Communicating, ChainClass::CommunicatingOnly)
        );
        if ok {
            return Ok(mdp);
        }
    }
    Err(LibraryError::GenerationFailed(MAX_RETRIES))
}

/// Random continuous-time model whose uniformization is recurrent: every
/// non-root action has a positive rate to the parent and the root always has
/// a positive rate to some descendant. Rates are uniform on `[0.05, 3]`,
/// cost rates on `[0, 10]`.
pub fn random_ct_skip_free(seed: u64, spec: &RandomSpec) -> Result<CtMdp<f64>, LibraryError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(&mut rng, spec);
    let actions = (0..tree.len())
        .map(|i| {
            let count = rng.gen_range(1..=spec.actions_per_state);
            (0..count)
                .map(|a| {
                    let support = random_support(&mut rng, &tree, i, InstanceClass::Recurrent);
                    let rates = support.into_iter().map(|j| (j, rng.gen_range(PROB_FLOOR..=3.0))).collect();
                    RateAction::new(((b'a' + a as u8) as char).to_string(), rng.gen_range(0.0..=10.0), rates)
                })
                .collect()
        })
        .collect();
    Ok(CtMdp::new(tree, actions)?)
}
