//! Reverse-mode differentiation over a closed set of array operations.
//!
//! A [`Graph`] is built once with declared input shapes and can then be
//! evaluated many times. [`evaluate_with_gradient`] returns the scalar output
//! and exact gradients; [`finite_difference_gradient`] is the independent
//! central-difference oracle used to verify them.
//!
//! Conventions: elementwise `min` and `clamp` route the gradient to the
//! selected branch, with ties going to the first argument. `sqrt`, `abs` and
//! `l2_norm` have zero gradient at zero. Division adds no epsilon.

mod eval;
mod gradcheck;
mod graph;
mod tensor;

pub use eval::{evaluate_with_gradient, Evaluation, Inputs};
pub use gradcheck::{
    check_gradient, finite_difference_at, finite_difference_gradient, max_relative_error,
    GradCheckReport, RELATIVE_FLOOR,
};
pub use graph::{BinaryKind, Graph, NodeId, Op, SparseRows, UnaryKind};
pub use tensor::Tensor;
