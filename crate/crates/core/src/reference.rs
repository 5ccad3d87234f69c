//! Classical solvers used as independent oracles.
//!
//! Nothing here shares arithmetic with the skip-free sweep: policies are
//! evaluated through dense transition matrices and LU solves, and the
//! iterative methods apply the full Bellman operator.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::mdp::{ModelError, Policy, SkipFreeMdp};

pub const MAX_ENUMERATED_POLICIES: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("policy {policy} has {classes} recurrent classes")]
    Multichain { policy: Policy, classes: usize },
    #[error("{count} policies exceed the enumeration limit of {MAX_ENUMERATED_POLICIES}")]
    TooManyPolicies { count: u128 },
    #[error("every policy is multichain")]
    NoUnichainPolicy,
    #[error("evaluation system of policy {policy} is singular")]
    SingularEvaluation { policy: Policy },
    #[error("no convergence to {tol} within {max_iter} iterations")]
    NoConvergence { tol: f64, max_iter: usize },
    #[error("discount factor {0} outside (0, 1)")]
    BadDiscount(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub g_star: f64,
    /// Relative costs with `h[0] == 0`; empty when not computed.
    pub h: Vec<f64>,
    pub policy: Policy,
    pub method: &'static str,
    /// Iterations, sweeps or evaluated policies, depending on the method.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedReport {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub iterations: usize,
}

/// Dense transition matrix of the chain induced by `d`.
pub fn policy_matrix(mdp: &SkipFreeMdp<f64>, d: &Policy) -> Result<DMatrix<f64>, ModelError> {
    mdp.check_policy(d)?;
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, pij) in mdp.action(i, d.get(i)).transitions(i, mdp.tree()) {
            p[(i, j)] += pij;
        }
    }
    Ok(p)
}

fn policy_costs(mdp: &SkipFreeMdp<f64>, d: &Policy) -> Vec<f64> {
    (0..mdp.num_states()).map(|i| mdp.action(i, d.get(i)).cost()).collect()
}

/// Closed communicating classes (recurrent classes) of a stochastic matrix.
pub fn recurrent_classes(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut g = DiGraph::<usize, ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|scc| {
            let mut c: Vec<usize> = scc.into_iter().map(|v| g[v]).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| c.iter().all(|&i| (0..n).all(|j| p[(i, j)] == 0.0 || c.binary_search(&j).is_ok())))
        .collect();
    classes.sort();
    classes
}

/// Stationary distribution of a stochastic matrix with one recurrent class;
/// transient states get zero mass. `Err(classes)` reports a multichain matrix.
pub fn stationary_distribution_matrix(p: &DMatrix<f64>) -> Result<Vec<f64>, usize> {
    let classes = recurrent_classes(p);
    if classes.len() != 1 {
        return Err(classes.len());
    }
    Ok(class_distribution(p, &classes[0]))
}

fn class_distribution(p: &DMatrix<f64>, class: &[usize]) -> Vec<f64> {
    let m = class.len();
    // (P_CC^T - I) π = 0 with the last equation replaced by Σ π = 1
    let mut a = DMatrix::zeros(m, m);
    for (r, &i) in class.iter().enumerate() {
        for (c, &j) in class.iter().enumerate() {
            a[(c, r)] = p[(i, j)];
        }
        a[(r, r)] -= 1.0;
    }
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let x = a.lu().solve(&b).expect("irreducible class has a unique stationary distribution");
    let mut pi = vec![0.0; p.nrows()];
    for (r, &i) in class.iter().enumerate() {
        pi[i] = x[r];
    }
    pi
}

/// Stationary distribution of the chain induced by `d`.
pub fn stationary_distribution(mdp: &SkipFreeMdp<f64>, d: &Policy) -> Result<Vec<f64>, OracleError> {
    let p = policy_matrix(mdp, d)?;
    stationary_distribution_matrix(&p).map_err(|classes| OracleError::Multichain { policy: d.clone(), classes })
}

/// Long-run average cost of `d` from a stationary-distribution solve. For a
/// multichain policy the smallest class gain is returned.
pub fn policy_gain(mdp: &SkipFreeMdp<f64>, d: &Policy) -> Result<(f64, bool), ModelError> {
    let p = policy_matrix(mdp, d)?;
    let c = policy_costs(mdp, d);
    let classes = recurrent_classes(&p);
    let gain = classes
        .iter()
        .map(|class| {
            let pi = class_distribution(&p, class);
            pi.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok((gain, classes.len() == 1))
}

/// Gain and bias of a unichain policy from the linear system
/// `g + h_i - Σ_j p_ij h_j = c_i`, `h_0 = 0`.
pub fn evaluate_gain_bias(mdp: &SkipFreeMdp<f64>, d: &Policy) -> Result<(f64, Vec<f64>), OracleError> {
    let p = policy_matrix(mdp, d)?;
    let c = policy_costs(mdp, d);
    let n = mdp.num_states();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, 0)] = 1.0;
        for j in 1..n {
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - p[(i, j)];
        }
    }
    let lu = a.lu();
    let x = lu
        .solve(&DVector::from_vec(c))
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| OracleError::SingularEvaluation { policy: d.clone() })?;
    let mut h = vec![0.0; n];
    h[1..n].copy_from_slice(&x.as_slice()[1..n]);
    Ok((x[0], h))
}

/// Visits every stationary deterministic policy in lexicographic order.
pub fn for_each_policy(mdp: &SkipFreeMdp<f64>, mut f: impl FnMut(&Policy)) {
    let n = mdp.num_states();
    let sizes: Vec<usize> = (0..n).map(|i| mdp.actions(i).len()).collect();
    let mut d = Policy::new(vec![0; n]);
    loop {
        f(&d);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if d.get(i) + 1 < sizes[i] {
                d.set(i, d.get(i) + 1);
                break;
            }
            d.set(i, 0);
        }
    }
}

/// Brute-force minimum average cost over all stationary deterministic policies.
pub fn enumerate_policies(mdp: &SkipFreeMdp<f64>, unichain_only: bool) -> Result<OracleReport, OracleError> {
    let count = mdp.policy_count();
    if count > MAX_ENUMERATED_POLICIES {
        return Err(OracleError::TooManyPolicies { count });
    }
    let mut best: Option<(f64, Policy, bool)> = None;
    let mut evaluated = 0;
    let mut err = None;
    for_each_policy(mdp, |d| {
        if err.is_some() {
            return;
        }
        match policy_gain(mdp, d) {
            Ok((g, unichain)) => {
                if unichain_only && !unichain {
                    return;
                }
                evaluated += 1;
                if best.as_ref().is_none_or(|(b, _, _)| g < *b) {
                    best = Some((g, d.clone(), unichain));
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    let (g_star, policy, unichain) = best.ok_or(OracleError::NoUnichainPolicy)?;
    let h = if unichain { evaluate_gain_bias(mdp, &policy).map(|(_, h)| h).unwrap_or_default() } else { Vec::new() };
    Ok(OracleReport { g_star, h, policy, method: "enumeration", iterations: evaluated })
}

/// Average-cost policy iteration with exact evaluation; keeps the incumbent
/// action unless another is strictly better.
pub fn policy_iteration_average(mdp: &SkipFreeMdp<f64>) -> Result<OracleReport, OracleError> {
    let n = mdp.num_states();
    let tree = mdp.tree();
    let mut d = mdp.first_policy();
    let max_iter = 10_000;
    for it in 1..=max_iter {
        let (g, h) = evaluate_gain_bias(mdp, &d)?;
        let mut next = d.clone();
        for i in 0..n {
            let q = |a: usize| {
                let act = mdp.action(i, a);
                act.cost() + act.transitions(i, tree).iter().map(|&(j, p)| p * h[j]).sum::<f64>()
            };
            let mut best_q = q(d.get(i));
            for a in 0..mdp.actions(i).len() {
                let qa = q(a);
                if qa < best_q - 1e-12 * (1.0 + best_q.abs()) {
                    best_q = qa;
                    next.set(i, a);
                }
            }
        }
        if next == d {
            return Ok(OracleReport { g_star: g, h, policy: d, method: "policy-iteration", iterations: it });
        }
        d = next;
    }
    Err(OracleError::NoConvergence { tol: 0.0, max_iter })
}

/// Weight on the original chain in the aperiodicity transform used by RVI.
const RVI_MIX: f64 = 0.5;

/// One relative value iteration sweep: `out = T v` under the aperiodicity
/// transform, returning `(min, max)` of `out - v`.
pub fn relative_value_sweep(mdp: &SkipFreeMdp<f64>, v: &[f64], out: &mut [f64]) -> (f64, f64) {
    let tree = mdp.tree();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..mdp.num_states() {
        let mut best = f64::INFINITY;
        for act in mdp.actions(i) {
            let mut ev = act.to_self() * v[i];
            if let Some(p) = tree.parent(i) {
                ev += act.to_parent() * v[p];
            }
            for &(j, p) in act.to_descendants() {
                ev += p * v[j];
            }
            let q = act.cost() + RVI_MIX * ev + (1.0 - RVI_MIX) * v[i];
            if q < best {
                best = q;
            }
        }
        out[i] = best;
        let diff = best - v[i];
        lo = lo.min(diff);
        hi = hi.max(diff);
    }
    (lo, hi)
}

/// Relative value iteration with span-seminorm stopping.
///
/// The chain is mixed with the identity, `P' = (P + I)/2`, so that periodic
/// policies converge; gain is unchanged and relative costs are rescaled back.
pub fn relative_value_iteration(mdp: &SkipFreeMdp<f64>, tol: f64, max_iter: usize) -> Result<OracleReport, OracleError> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for it in 1..=max_iter {
        let (lo, hi) = relative_value_sweep(mdp, &v, &mut next);
        let offset = next[0];
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni - offset;
        }
        if hi - lo <= tol {
            let h: Vec<f64> = v.iter().map(|x| x * RVI_MIX).collect();
            let policy = greedy_average(mdp, &h);
            return Ok(OracleReport { g_star: 0.5 * (lo + hi), h, policy, method: "relative-value-iteration", iterations: it });
        }
    }
    Err(OracleError::NoConvergence { tol, max_iter })
}

fn greedy_average(mdp: &SkipFreeMdp<f64>, h: &[f64]) -> Policy {
    let tree = mdp.tree();
    Policy::new(
        (0..mdp.num_states())
            .map(|i| {
                argmin((0..mdp.actions(i).len()).map(|a| {
                    let act = mdp.action(i, a);
                    act.cost() + act.transitions(i, tree).iter().map(|&(j, p)| p * h[j]).sum::<f64>()
                }))
            })
            .collect(),
    )
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (a, v) in values.enumerate() {
        if v < best.1 {
            best = (a, v);
        }
    }
    best.0
}

/// `Q(i, a) = c_i(a) + β Σ_j p_ij(a) v_j`.
pub fn discounted_q(mdp: &SkipFreeMdp<f64>, beta: f64, v: &[f64]) -> Vec<Vec<f64>> {
    let tree = mdp.tree();
    (0..mdp.num_states())
        .map(|i| {
            mdp.actions(i)
                .iter()
                .map(|act| act.cost() + beta * act.transitions(i, tree).iter().map(|&(j, p)| p * v[j]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Sup-norm violation of `v_i = min_a Q(i, a)`.
pub fn discounted_residual(mdp: &SkipFreeMdp<f64>, beta: f64, v: &[f64]) -> f64 {
    discounted_q(mdp, beta, v)
        .iter()
        .zip(v)
        .map(|(q, vi)| (q.iter().copied().fold(f64::INFINITY, f64::min) - vi).abs())
        .fold(0.0, f64::max)
}

/// Discounted value iteration, stopped once the contraction bound guarantees
/// a sup-norm error of at most `tol`.
pub fn discounted_value_iteration(mdp: &SkipFreeMdp<f64>, beta: f64, tol: f64, max_iter: usize) -> Result<DiscountedReport, OracleError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(OracleError::BadDiscount(beta));
    }
    let mut v = vec![0.0; mdp.num_states()];
    for it in 1..=max_iter {
        let q = discounted_q(mdp, beta, &v);
        let next: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if beta / (1.0 - beta) * delta <= tol {
            let policy = Policy::new(discounted_q(mdp, beta, &v).into_iter().map(|row| argmin(row.into_iter())).collect());
            return Ok(DiscountedReport { values: v, policy, iterations: it });
        }
    }
    Err(OracleError::NoConvergence { tol, max_iter })
}
