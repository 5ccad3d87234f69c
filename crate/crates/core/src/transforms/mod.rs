//! Model transformations: discounting, uniformization, and communicating models.

pub mod communicating;
pub mod discount;
pub mod uniformize;

use thiserror::Error;

use crate::mdp::ModelError;
use crate::tree::TreeError;

pub use communicating::{solve_communicating, CandidateRecord, CommWork};
pub use discount::{discount_to_average, recover_discounted_values, restrict_policy, AugmentedModel, ADDED_ACTION};
pub use uniformize::{continuous_relative_costs, uniformize, CtMdp, RateAction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("discount factor must lie in (0, 1), got {0}")]
    BadDiscount(f64),
    #[error("discounted value recovery needs a linear chain")]
    NotChain,
    #[error("all transition rates are zero")]
    ZeroRates,
    #[error("state {state} action {action:?}: invalid rate {value} to state {dest}")]
    InvalidRate { state: usize, action: String, dest: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}
