//! Average-cost Markov decision processes that are skip-free in the negative
//! direction on a rooted tree: the process moves only to the parent, stays,
//! or jumps into the current subtree.
//!
//! The solver is generic over the scalar type; [`Mdp`] and friends fix it to `f64`.

pub mod library;
pub mod mdp;
pub mod reference;
pub mod scalar;
pub mod solver;
pub mod text_format;
pub mod transforms;
pub mod tree;

pub use mdp::{validate_skip_free, Action, ActionSpec, ChainClass, ModelError, Policy, SkipFreeMdp};
pub use scalar::Scalar;
pub use solver::{
    evaluate_policy, residual, solve_average, PolicyStats, RootVariant, SolveError, SolveOptions, SolveReport, SweepState,
    TraceRow,
};
pub use text_format::{emit_model, parse_model, FormatError, Model, ModelFile};
pub use transforms::{solve_communicating, uniformize, CtMdp, TransformError};
pub use tree::{Tree, TreeError};

pub type Mdp = SkipFreeMdp<f64>;
pub type Mdp32 = SkipFreeMdp<f32>;
pub type Report = SolveReport<f64>;
pub type Report32 = SolveReport<f32>;
pub type Options = SolveOptions<f64>;
pub type Options32 = SolveOptions<f32>;
pub type Stats = PolicyStats<f64>;
pub type RateModel = CtMdp<f64>;
