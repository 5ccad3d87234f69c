//! Modified skip-free algorithm for communicating models.
//!
//! Actions split into `B_i` (positive probability of moving to the parent) and
//! its complement `B̄_i`. Each state `r` with `B̄_r` non-empty, and the root,
//! distinguishes a sub-problem on its subtree `T(r)` in which `r` must use a
//! `B̄_r` action and every descendant a `B` action. One shared sweep over the
//! `B` actions yields `y` and `t` for all sub-problems; each sub-problem then
//! picks its own root action, and the cheapest sub-problem sets the next cost
//! estimate. At convergence the actions above the winning subtree are repaired
//! so the optimality equations hold on every state.

use crate::mdp::{ChainClass, Policy, SkipFreeMdp};
use crate::scalar::Scalar;
use crate::solver::{
    backward_sweep, distinguished_terms, evaluate_policy, relative_costs_below, trace_to_f64, variant_objective, SolveError,
    SolveOptions, SolveReport, TraceRow,
};

/// Action partition and per-candidate root records for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CommWork<T> {
    /// `B_i`: actions with a positive probability of moving to the parent (empty at the root).
    pub down: Vec<Vec<usize>>,
    /// `B̄_i`: the remaining actions (all actions at the root).
    pub stay: Vec<Vec<usize>>,
    pub records: Vec<CandidateRecord<T>>,
    /// Index into `records` of the current minimizer.
    pub best: usize,
}

/// Root quantities of the sub-problem distinguished at `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRecord<T> {
    pub state: usize,
    pub action: usize,
    pub u: T,
    pub g: T,
}

impl<T: Scalar> CommWork<T> {
    pub fn partition(mdp: &SkipFreeMdp<T>) -> Self {
        let n = mdp.num_states();
        let mut down = vec![Vec::new(); n];
        let mut stay = vec![Vec::new(); n];
        for i in 0..n {
            for (a, act) in mdp.actions(i).iter().enumerate() {
                if i != 0 && act.to_parent() > T::zero() {
                    down[i].push(a);
                } else {
                    stay[i].push(a);
                }
            }
        }
        Self { down, stay, records: Vec::new(), best: 0 }
    }

    /// States that can be the top of a recurrent class.
    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.stay.len()).filter(|&r| !self.stay[r].is_empty())
    }
}

/// Solves a communicating (possibly recurrent) model.
pub fn solve_communicating<T: Scalar>(mdp: &SkipFreeMdp<T>, opts: &SolveOptions<T>) -> Result<SolveReport<T>, SolveError> {
    opts.check()?;
    let class = mdp.classify();
    if let ChainClass::NotCommunicating { .. } = class {
        return Err(SolveError::NotCommunicating(class));
    }
    let tree = mdp.tree();
    let mut work = CommWork::partition(mdp);

    // Initial policy: first B action below the root, first action at the root.
    let mut d = Policy::new((0..mdp.num_states()).map(|i| if i == 0 { 0 } else { work.down[i][0] }).collect());
    let mut top = 0;
    let mut g = evaluate_policy(mdp, &d)?.g;
    let mut trace = vec![TraceRow { iteration: 0, g, u0: g }];

    for n in 1..=opts.max_iter {
        let x = g;
        let sweep = backward_sweep(mdp, x, None)?;
        work.records.clear();
        for r in work.candidates().collect::<Vec<_>>() {
            let mut best: Option<(usize, T, T, T)> = None;
            for &a in &work.stay[r] {
                let (num, den) = distinguished_terms(mdp, r, a, x, &sweep.y, &sweep.t);
                let obj = variant_objective(opts.variant, num, den, mdp.action(r, a).to_self());
                if best.is_none_or(|(_, o, _, _)| obj < o) {
                    best = Some((a, obj, num, den));
                }
            }
            let (a, _, num, den) = best.unwrap();
            let u = num / den;
            work.records.push(CandidateRecord { state: r, action: a, u, g: x + u });
        }
        work.best = 0;
        for (k, rec) in work.records.iter().enumerate() {
            if rec.g < work.records[work.best].g {
                work.best = k;
            }
        }
        let mut rec = work.records[work.best];
        // the incumbent subtree reproduces x exactly, so a positive minimum is roundoff
        rec.g = x + rec.u.min(T::zero());

        let mut next = Policy::new(sweep.action.clone());
        next.set(rec.state, rec.action);
        let repeated = rec.state == top && tree.subtree(top).iter().all(|&i| next.get(i) == d.get(i));
        trace.push(TraceRow { iteration: n, g: rec.g, u0: rec.u });

        if rec.u >= -opts.tol || repeated {
            return finish(mdp, opts, next, rec, sweep.y, sweep.t, trace, n);
        }
        d = next;
        top = rec.state;
        g = rec.g;
    }
    Err(SolveError::MaxIterExceeded { max_iter: opts.max_iter, trace: trace_to_f64(&trace) })
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    mdp: &SkipFreeMdp<T>,
    opts: &SolveOptions<T>,
    mut policy: Policy,
    rec: CandidateRecord<T>,
    y: Vec<T>,
    t: Vec<T>,
    trace: Vec<TraceRow<T>>,
    iterations: usize,
) -> Result<SolveReport<T>, SolveError> {
    let tree = mdp.tree();
    let g = rec.g;
    let mut h = relative_costs_below(tree, rec.state, &y);
    let n = mdp.num_states();
    let mut inside = vec![false; n];
    for &i in tree.subtree(rec.state) {
        inside[i] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
    if !outside.is_empty() {
        repair_transient(mdp, g, &mut h, &inside, &outside, &mut policy, opts)?;
    }
    let shift = h[0];
    for v in h.iter_mut() {
        *v -= shift;
    }
    Ok(SolveReport {
        g_star: g,
        h_star: h,
        policy,
        trace,
        iterations,
        variant: opts.variant,
        distinguished: rec.state,
        y,
        t,
    })
}

fn q_value<T: Scalar>(mdp: &SkipFreeMdp<T>, i: usize, a: usize, g: T, h: &[T]) -> T {
    let act = mdp.action(i, a);
    act.cost() - g + act.transitions(i, mdp.tree()).iter().map(|&(j, p)| p * h[j]).sum::<T>()
}

/// Value iteration on the states outside the winning subtree, with `h` fixed
/// inside it. Starts from the evaluation of a policy that reaches the subtree,
/// so the iterates decrease monotonically.
fn repair_transient<T: Scalar>(
    mdp: &SkipFreeMdp<T>,
    g: T,
    h: &mut [T],
    inside: &[bool],
    outside: &[usize],
    policy: &mut Policy,
    opts: &SolveOptions<T>,
) -> Result<(), SolveError> {
    let tree = mdp.tree();
    // Layered reachability: each assigned action has positive mass on a
    // state that is closer to the subtree.
    let mut reached = inside.to_vec();
    let mut pending: Vec<usize> = outside.to_vec();
    while !pending.is_empty() {
        let snapshot = reached.clone();
        let before = pending.len();
        pending.retain(|&i| {
            let hit = (0..mdp.actions(i).len())
                .find(|&a| mdp.action(i, a).transitions(i, tree).iter().any(|&(j, _)| j != i && snapshot[j]));
            match hit {
                Some(a) => {
                    policy.set(i, a);
                    reached[i] = true;
                    false
                }
                None => true,
            }
        });
        if pending.len() == before {
            return Err(SolveError::RepairFailed(format!("states {pending:?} cannot reach the recurrent class")));
        }
    }

    let tol = opts.tol / T::lit(10.0);
    let limit = opts.max_iter.max(1000) * 100;
    let converge = |h: &mut [T], greedy: bool, policy: &Policy| -> Result<(), SolveError> {
        for _ in 0..limit {
            let mut worst = T::zero();
            for &i in outside {
                let v = if greedy {
                    (0..mdp.actions(i).len()).map(|a| q_value(mdp, i, a, g, h)).fold(T::infinity(), T::min)
                } else {
                    q_value(mdp, i, policy.get(i), g, h)
                };
                worst = worst.max((v - h[i]).abs());
                h[i] = v;
            }
            if worst <= tol {
                return Ok(());
            }
        }
        Err(SolveError::RepairFailed(format!("value iteration on transient states did not reach {}", tol)))
    };
    converge(h, false, policy)?;
    converge(h, true, policy)?;

    for &i in outside {
        let mut best = (policy.get(i), q_value(mdp, i, policy.get(i), g, h));
        for a in 0..mdp.actions(i).len() {
            let q = q_value(mdp, i, a, g, h);
            if q < best.1 {
                best = (a, q);
            }
        }
        policy.set(i, best.0);
    }
    Ok(())
}
