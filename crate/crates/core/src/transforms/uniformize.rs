//! Continuous-time skip-free models and their uniformization.

use crate::mdp::{ActionSpec, ModelError, SkipFreeMdp};
use crate::scalar::Scalar;
use crate::tree::Tree;

use super::TransformError;

/// One action of a continuous-time model: a cost rate and transition rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAction<T> {
    pub label: String,
    pub cost_rate: T,
    /// `(destination, rate)`; self-transitions are allowed.
    pub rates: Vec<(usize, T)>,
}

impl<T> RateAction<T> {
    pub fn new(label: impl Into<String>, cost_rate: T, rates: Vec<(usize, T)>) -> Self {
        Self { label: label.into(), cost_rate, rates }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtMdp<T> {
    tree: Tree,
    actions: Vec<Vec<RateAction<T>>>,
}

impl<T: Scalar> CtMdp<T> {
    /// Checks finiteness, non-negativity and the skip-free rule on positive rates.
    pub fn new(tree: Tree, actions: Vec<Vec<RateAction<T>>>) -> Result<Self, TransformError> {
        if actions.len() != tree.len() {
            return Err(ModelError::StateCountMismatch { expected: tree.len(), got: actions.len() }.into());
        }
        for (state, row) in actions.iter().enumerate() {
            if row.is_empty() {
                return Err(ModelError::EmptyActionSet { state }.into());
            }
            for (idx, a) in row.iter().enumerate() {
                if row[..idx].iter().any(|b| b.label == a.label) {
                    return Err(ModelError::DuplicateAction { state, action: a.label.clone() }.into());
                }
                if !a.cost_rate.is_finite() {
                    return Err(ModelError::InvalidCost { state, action: a.label.clone(), value: a.cost_rate.as_f64() }.into());
                }
                for &(dest, q) in &a.rates {
                    if dest >= tree.len() {
                        return Err(ModelError::UnknownState { state, action: a.label.clone(), dest }.into());
                    }
                    if !(q >= T::zero() && q.is_finite()) {
                        return Err(TransformError::InvalidRate { state, action: a.label.clone(), dest, value: q.as_f64() });
                    }
                    let allowed = dest == state || tree.parent(state) == Some(dest) || tree.is_descendant(dest, state);
                    if q > T::zero() && !allowed {
                        return Err(ModelError::SkipFreeViolation { state, action: a.label.clone(), dest }.into());
                    }
                }
            }
        }
        Ok(Self { tree, actions })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn num_states(&self) -> usize {
        self.tree.len()
    }

    pub fn actions(&self, state: usize) -> &[RateAction<T>] {
        &self.actions[state]
    }

    /// Uniformization rate `Λ`: the largest total outflow rate, self-rates included.
    pub fn max_total_rate(&self) -> T {
        self.actions
            .iter()
            .flatten()
            .map(|a| a.rates.iter().map(|&(_, q)| q).sum::<T>())
            .fold(T::zero(), T::max)
    }
}

/// Discrete-time model at uniform event rate `Λ`:
/// `p'_ij = q_ij/Λ` for `j ≠ i`, `p'_ii = 1 - Σ_{j≠i} q_ij/Λ`, `c' = Λ c`.
///
/// Returns the model and `Λ`.
pub fn uniformize<T: Scalar>(ct: &CtMdp<T>) -> Result<(SkipFreeMdp<T>, T), TransformError> {
    let lambda = ct.max_total_rate();
    if lambda.is_nan() || lambda <= T::zero() {
        return Err(TransformError::ZeroRates);
    }
    let specs = (0..ct.num_states())
        .map(|i| {
            ct.actions(i)
                .iter()
                .map(|a| {
                    let mut out: Vec<(usize, T)> =
                        a.rates.iter().filter(|&&(j, q)| j != i && q > T::zero()).map(|&(j, q)| (j, q / lambda)).collect();
                    let leave: T = out.iter().map(|&(_, p)| p).sum();
                    let stay = (T::one() - leave).max(T::zero());
                    if stay > T::zero() {
                        out.push((i, stay));
                    }
                    ActionSpec::new(a.label.clone(), lambda * a.cost_rate, out)
                })
                .collect()
        })
        .collect();
    Ok((SkipFreeMdp::new(ct.tree().clone(), specs)?, lambda))
}

/// Relative costs reported for the uniformized continuous-time problem, `h'/Λ`.
pub fn continuous_relative_costs<T: Scalar>(h_discrete: &[T], lambda: T) -> Vec<T> {
    h_discrete.iter().map(|&h| h / lambda).collect()
}
