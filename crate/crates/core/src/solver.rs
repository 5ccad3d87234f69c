//! Skip-free improvement algorithm for recurrent average-cost models.
//!
//! One iteration is a single backward pass over the levels of the tree: for
//! the current cost estimate `x`, each non-root state picks the action that
//! minimizes its `x`-revised expected cost of first passage to its parent,
//! `y_i`, and records the matching expected first-passage time `t_i`. The root
//! then picks an action and the new average cost is `x + u0`, which is the
//! exact average cost of the new policy. The loop stops when `u0` vanishes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mdp::{ChainClass, ModelError, Policy, SkipFreeMdp};
use crate::scalar::Scalar;
use crate::tree::Tree;

/// How the action at the distinguished state is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RootVariant {
    /// Minimizes the `x`-revised cost until first return.
    FirstReturn,
    /// Minimizes the right-hand side of the root optimality equation.
    OptimalityEq,
    /// Minimizes the resulting average cost given the non-root actions.
    #[default]
    MeanImprovement,
}

impl RootVariant {
    pub const ALL: [RootVariant; 3] = [RootVariant::FirstReturn, RootVariant::OptimalityEq, RootVariant::MeanImprovement];

    pub fn name(self) -> &'static str {
        match self {
            RootVariant::FirstReturn => "first-return",
            RootVariant::OptimalityEq => "optimality",
            RootVariant::MeanImprovement => "mean-improvement",
        }
    }
}

impl fmt::Display for RootVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RootVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RootVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected first-return, optimality or mean-improvement)"))
    }
}

/// One row of the convergence trace. Row 0 is the evaluation of the initial policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub iteration: usize,
    pub g: T,
    pub u0: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model is not recurrent ({0})")]
    NotRecurrent(ChainClass),
    #[error("model is not communicating ({0})")]
    NotCommunicating(ChainClass),
    #[error("state {state}, action {action}: zero probability of moving to the parent")]
    DivisionByZeroTransition { state: usize, action: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no convergence within {max_iter} iterations")]
    MaxIterExceeded { max_iter: usize, trace: Vec<TraceRow<f64>> },
    #[error("could not repair the policy on transient states: {0}")]
    RepairFailed(String),
}

/// Choice made at the distinguished state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootChoice<T> {
    pub action: usize,
    pub u0: T,
    pub t0: T,
}

/// Per-iteration state of the backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState<T> {
    pub x: T,
    /// Chosen action per state; entry 0 is meaningful once `root` is set.
    pub action: Vec<usize>,
    /// `x`-revised expected cost of first passage to the parent; `y[0]` is unused.
    pub y: Vec<T>,
    /// Expected first-passage time to the parent; `t[0]` is unused.
    pub t: Vec<T>,
    pub root: Option<RootChoice<T>>,
    restricted_root: Option<usize>,
}

impl<T: Scalar> SweepState<T> {
    /// The policy made of the sweep's actions. Panics if the root is not yet updated.
    pub fn policy(&self) -> Policy {
        assert!(self.root.is_some(), "root_update has not run");
        Policy::new(self.action.clone())
    }

    /// Relative costs `h_j = Σ_{k ∈ Δ(0,j)} y_k`, so `h_0 = 0`.
    pub fn relative_costs(&self, tree: &Tree) -> Vec<T> {
        relative_costs_below(tree, 0, &self.y)
    }
}

/// `h_r = 0` and `h_j = h_{ρ(j)} + y_j` on the subtree of `r`; zero elsewhere.
pub(crate) fn relative_costs_below<T: Scalar>(tree: &Tree, r: usize, y: &[T]) -> Vec<T> {
    let mut h = vec![T::zero(); tree.len()];
    for &j in &tree.subtree(r)[1..] {
        h[j] = h[tree.parent(j).unwrap()] + y[j];
    }
    h
}

/// `(Σ_{k∈D(i)} p̄_ik(a) y_k, Σ_{k∈D(i)} p̄_ik(a) t_k)`, evaluated as a sum over the
/// supported descendants `j` of `p_ij(a)` times the cumulative `y` and `t` along `Δ(i, j)`.
#[inline]
pub(crate) fn descendant_sums<T: Scalar>(tree: &Tree, i: usize, support: &[(usize, T)], y: &[T], t: &[T]) -> (T, T) {
    let mut sy = T::zero();
    let mut st = T::zero();
    for &(j, p) in support {
        let mut cy = T::zero();
        let mut ct = T::zero();
        let mut k = j;
        while k != i {
            cy += y[k];
            ct += t[k];
            k = tree.parent(k).unwrap();
        }
        sy += p * cy;
        st += p * ct;
    }
    (sy, st)
}

/// Objective terms at a state used as the distinguished state of its subtree:
/// numerator `c(a) - x + Σ p̄ y` and mean-improvement denominator `1 + Σ p̄ t`.
#[inline]
pub(crate) fn distinguished_terms<T: Scalar>(mdp: &SkipFreeMdp<T>, r: usize, a: usize, x: T, y: &[T], t: &[T]) -> (T, T) {
    let act = mdp.action(r, a);
    let (sy, st) = descendant_sums(mdp.tree(), r, act.to_descendants(), y, t);
    (act.cost() - x + sy, T::one() + st)
}

pub(crate) fn variant_objective<T: Scalar>(variant: RootVariant, num: T, den: T, to_self: T) -> T {
    match variant {
        RootVariant::FirstReturn => {
            let leave = T::one() - to_self;
            // An absorbing action returns every step.
            if leave > T::zero() {
                num / leave
            } else {
                num
            }
        }
        RootVariant::OptimalityEq => num,
        RootVariant::MeanImprovement => num / den,
    }
}

/// Solves the first-passage equations level by level from the deepest level up.
///
/// Without `restrict`, each state minimizes over its actions that move to the
/// parent with positive probability (all actions in a recurrent model). With
/// `restrict`, the single action `restrict[i]` is used; a restricted action
/// that cannot reach the parent is an error.
pub fn backward_sweep<T: Scalar>(mdp: &SkipFreeMdp<T>, x: T, restrict: Option<&Policy>) -> Result<SweepState<T>, SolveError> {
    let tree = mdp.tree();
    let n = mdp.num_states();
    if let Some(d) = restrict {
        mdp.check_policy(d)?;
    }
    let mut y = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut action = vec![0; n];

    for level in tree.levels()[1..].iter().rev() {
        for &i in level {
            let acts = mdp.actions(i);
            let mut best: Option<(usize, T, T)> = None;
            let candidates = match restrict {
                Some(d) => d.get(i)..d.get(i) + 1,
                None => 0..acts.len(),
            };
            for a in candidates {
                let act = &acts[a];
                let down = act.to_parent();
                if down <= T::zero() {
                    if restrict.is_some() {
                        return Err(SolveError::DivisionByZeroTransition { state: i, action: a });
                    }
                    continue;
                }
                let (sy, st) = descendant_sums(tree, i, act.to_descendants(), &y, &t);
                let value = (act.cost() - x + sy) / down;
                if best.is_none_or(|(_, v, _)| value < v) {
                    best = Some((a, value, (T::one() + st) / down));
                }
            }
            let (a, yi, ti) = best.ok_or(SolveError::Model(ModelError::UnreachableParent { state: i }))?;
            action[i] = a;
            y[i] = yi;
            t[i] = ti;
        }
    }

    Ok(SweepState { x, action, y, t, root: None, restricted_root: restrict.map(|d| d.get(0)) })
}

/// Chooses the root action with `variant` and fills in `u0` and `t0`.
///
/// `u0` always uses the mean-improvement ratio at the chosen action, so
/// `x + u0` is the average cost of the resulting policy whatever the variant.
pub fn root_update<T: Scalar>(mdp: &SkipFreeMdp<T>, mut sweep: SweepState<T>, variant: RootVariant) -> Result<SweepState<T>, SolveError> {
    let candidates = match sweep.restricted_root {
        Some(a) => a..a + 1,
        None => 0..mdp.actions(0).len(),
    };
    let mut best: Option<(usize, T, T, T)> = None;
    for a in candidates {
        let (num, den) = distinguished_terms(mdp, 0, a, sweep.x, &sweep.y, &sweep.t);
        let obj = variant_objective(variant, num, den, mdp.action(0, a).to_self());
        if best.is_none_or(|(_, o, _, _)| obj < o) {
            best = Some((a, obj, num, den));
        }
    }
    let (a, _, num, den) = best.expect("root has at least one action");
    let leave = T::one() - mdp.action(0, a).to_self();
    sweep.action[0] = a;
    sweep.root = Some(RootChoice { action: a, u0: num / den, t0: den / leave });
    Ok(sweep)
}

/// Renewal quantities of a fixed policy, with state 0 as the renewal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStats<T> {
    /// Average cost `g(d)`.
    pub g: T,
    /// Expected first-return time to state 0.
    pub tau: T,
    /// Expected cost until first return to state 0.
    pub cost: T,
}

impl<T: Scalar> PolicyStats<T> {
    /// `x`-revised first-return cost `C(d) - x τ(d)`.
    pub fn h_at(&self, x: T) -> T {
        self.cost - x * self.tau
    }
}

/// Evaluates `d` with one restricted sweep at `x = 0`.
pub fn evaluate_policy<T: Scalar>(mdp: &SkipFreeMdp<T>, d: &Policy) -> Result<PolicyStats<T>, SolveError> {
    let sweep = root_update(mdp, backward_sweep(mdp, T::zero(), Some(d))?, RootVariant::MeanImprovement)?;
    let root = sweep.root.unwrap();
    let (num, _) = distinguished_terms(mdp, 0, d.get(0), T::zero(), &sweep.y, &sweep.t);
    let cost = num / (T::one() - mdp.action(0, d.get(0)).to_self());
    Ok(PolicyStats { g: root.u0, tau: root.t0, cost })
}

/// Expected `x`-revised cost until first return to state 0 under `d`, from a
/// restricted sweep at `x`.
pub fn revised_return_cost<T: Scalar>(mdp: &SkipFreeMdp<T>, d: &Policy, x: T) -> Result<T, SolveError> {
    let sweep = backward_sweep(mdp, x, Some(d))?;
    let (num, _) = distinguished_terms(mdp, 0, d.get(0), x, &sweep.y, &sweep.t);
    Ok(num / (T::one() - mdp.action(0, d.get(0)).to_self()))
}

/// Average cost and relative costs (`h_0 = 0`) of a fixed policy.
pub fn policy_relative_costs<T: Scalar>(mdp: &SkipFreeMdp<T>, d: &Policy) -> Result<(T, Vec<T>), SolveError> {
    let g = evaluate_policy(mdp, d)?.g;
    let sweep = backward_sweep(mdp, g, Some(d))?;
    Ok((g, sweep.relative_costs(mdp.tree())))
}

/// One improvement step from the cost estimate `x`: returns the new policy and `x + u0`.
pub fn improve<T: Scalar>(mdp: &SkipFreeMdp<T>, x: T, variant: RootVariant) -> Result<(Policy, T), SolveError> {
    let sweep = root_update(mdp, backward_sweep(mdp, x, None)?, variant)?;
    let u0 = sweep.root.unwrap().u0;
    Ok((sweep.policy(), x + u0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    pub variant: RootVariant,
    pub tol: T,
    pub max_iter: usize,
    /// Starting policy; defaults to the first action in every state.
    pub initial: Option<Policy>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self { variant: RootVariant::MeanImprovement, tol: T::lit(1e-10), max_iter: 100_000, initial: None }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_variant(mut self, variant: RootVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_initial(mut self, d: Policy) -> Self {
        self.initial = Some(d);
        self
    }

    pub(crate) fn check(&self) -> Result<(), SolveError> {
        if self.tol > T::zero() {
            Ok(())
        } else {
            Err(SolveError::InvalidTolerance(self.tol.as_f64()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub g_star: T,
    /// Relative costs normalized so that `h_star[0] == 0`.
    pub h_star: Vec<T>,
    pub policy: Policy,
    pub trace: Vec<TraceRow<T>>,
    /// Improvement iterations performed (initial evaluation not counted).
    pub iterations: usize,
    pub variant: RootVariant,
    /// State playing the role of the recurrent distinguished state at exit.
    pub distinguished: usize,
    /// First-passage costs `y` from the final sweep.
    pub y: Vec<T>,
    /// First-passage times `t` from the final sweep.
    pub t: Vec<T>,
}

pub(crate) fn trace_to_f64<T: Scalar>(trace: &[TraceRow<T>]) -> Vec<TraceRow<f64>> {
    trace.iter().map(|r| TraceRow { iteration: r.iteration, g: r.g.as_f64(), u0: r.u0.as_f64() }).collect()
}

/// Runs the skip-free algorithm to convergence on a recurrent model.
///
/// Stops when `u0 >= -tol` or the policy repeats.
pub fn solve_average<T: Scalar>(mdp: &SkipFreeMdp<T>, opts: &SolveOptions<T>) -> Result<SolveReport<T>, SolveError> {
    opts.check()?;
    let class = mdp.classify();
    if class != ChainClass::Recurrent {
        return Err(SolveError::NotRecurrent(class));
    }
    let mut d = opts.initial.clone().unwrap_or_else(|| mdp.first_policy());
    mdp.check_policy(&d)?;
    let mut g = evaluate_policy(mdp, &d)?.g;
    let mut trace = vec![TraceRow { iteration: 0, g, u0: g }];

    for n in 1..=opts.max_iter {
        let sweep = root_update(mdp, backward_sweep(mdp, g, None)?, opts.variant)?;
        let u0 = sweep.root.unwrap().u0;
        let next = sweep.policy();
        // the incumbent actions give u0 = 0, so a positive u0 is roundoff
        let g_next = g + u0.min(T::zero());
        trace.push(TraceRow { iteration: n, g: g_next, u0 });
        if u0 >= -opts.tol || next == d {
            let h_star = sweep.relative_costs(mdp.tree());
            return Ok(SolveReport {
                g_star: g_next,
                h_star,
                policy: next,
                trace,
                iterations: n,
                variant: opts.variant,
                distinguished: 0,
                y: sweep.y,
                t: sweep.t,
            });
        }
        d = next;
        g = g_next;
    }
    Err(SolveError::MaxIterExceeded { max_iter: opts.max_iter, trace: trace_to_f64(&trace) })
}

/// Largest violation of the average-cost optimality equations
/// `h_i = min_a { c_i(a) - g + Σ_j p_ij(a) h_j }`.
pub fn residual<T: Scalar>(mdp: &SkipFreeMdp<T>, g: T, h: &[T]) -> T {
    let tree = mdp.tree();
    (0..mdp.num_states())
        .map(|i| {
            let best = mdp
                .actions(i)
                .iter()
                .map(|a| a.cost() - g + a.transitions(i, tree).iter().map(|&(j, p)| p * h[j]).sum::<T>())
                .fold(T::infinity(), T::min);
            (h[i] - best).abs()
        })
        .fold(T::zero(), T::max)
}
