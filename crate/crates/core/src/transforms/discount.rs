//! Discounted problems as average-cost problems on an augmented tree.
//!
//! Every original transition is scaled by `β`. One new terminal state is hung
//! below each original terminal; the remaining `1 - β` from each state goes to
//! the new terminals inside its (augmented) subtree, split uniformly. A new
//! terminal moves to its parent with probability `β`, stays with `1 - β`, and
//! costs nothing.

use crate::mdp::{ActionSpec, SkipFreeMdp};
use crate::scalar::Scalar;
use crate::solver::SolveReport;
use crate::tree::Tree;

use super::TransformError;

/// Label of the single action of an added terminal state.
pub const ADDED_ACTION: &str = "discount";

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel<T> {
    pub mdp: SkipFreeMdp<T>,
    /// Original state of each augmented state, `None` for added terminals.
    pub origin: Vec<Option<usize>>,
    pub beta: T,
    pub added_terminals: Vec<usize>,
    original_is_chain: bool,
}

impl<T: Scalar> AugmentedModel<T> {
    pub fn original_states(&self) -> usize {
        self.origin.iter().filter(|o| o.is_some()).count()
    }

    /// True when built from a linear chain, the case with a closed-form value recovery.
    pub fn from_chain(&self) -> bool {
        self.original_is_chain
    }
}

/// Builds the augmented average-cost model for discount factor `beta`.
pub fn discount_to_average<T: Scalar>(mdp: &SkipFreeMdp<T>, beta: T) -> Result<AugmentedModel<T>, TransformError> {
    if !(beta > T::zero() && beta < T::one()) {
        return Err(TransformError::BadDiscount(beta.as_f64()));
    }
    let tree = mdp.tree();
    let n = mdp.num_states();
    let terminals = tree.terminals();
    let mut parents = tree.parent_list();
    let added: Vec<usize> = (0..terminals.len()).map(|k| n + k).collect();
    parents.extend(terminals.iter().copied());
    let aug_tree = Tree::from_parents(&parents)?;

    let mut specs = Vec::with_capacity(n + added.len());
    for (i, row) in mdp.to_specs().into_iter().enumerate() {
        let inside: Vec<usize> = added
            .iter()
            .copied()
            .filter(|&e| aug_tree.in_subtree(aug_tree.parent(e).unwrap(), i))
            .collect();
        let share = (T::one() - beta) / T::lit(inside.len() as f64);
        specs.push(
            row.into_iter()
                .map(|spec| {
                    let mut transitions: Vec<(usize, T)> = spec.transitions.into_iter().map(|(j, p)| (j, beta * p)).collect();
                    transitions.extend(inside.iter().map(|&e| (e, share)));
                    ActionSpec::new(spec.label, spec.cost, transitions)
                })
                .collect(),
        );
    }
    for (&e, &parent) in added.iter().zip(&terminals) {
        specs.push(vec![ActionSpec::new(ADDED_ACTION, T::zero(), vec![(parent, beta), (e, T::one() - beta)])]);
    }

    let origin = (0..n).map(Some).chain(added.iter().map(|_| None)).collect();
    Ok(AugmentedModel {
        mdp: SkipFreeMdp::new(aug_tree, specs)?,
        origin,
        beta,
        added_terminals: added,
        original_is_chain: tree.is_chain(),
    })
}

/// Optimal discounted values of the original chain from a solve of the augmented
/// model: `v_j = g'/(1-β) - (h'_{M+1} - h'_j)`.
pub fn recover_discounted_values<T: Scalar>(aug: &AugmentedModel<T>, report: &SolveReport<T>) -> Result<Vec<T>, TransformError> {
    if !aug.original_is_chain {
        return Err(TransformError::NotChain);
    }
    let last = aug.added_terminals[0];
    let base = report.g_star / (T::one() - aug.beta);
    let h = &report.h_star;
    Ok((0..aug.original_states()).map(|j| base - (h[last] - h[j])).collect())
}

/// Restriction of an augmented-model policy to the original states.
pub fn restrict_policy<T: Scalar>(aug: &AugmentedModel<T>, d: &crate::mdp::Policy) -> crate::mdp::Policy {
    crate::mdp::Policy::new(d.as_slice()[..aug.original_states()].to_vec())
}
