//! Budgeted online kernel learning.
//!
//! The crate provides the aggressive Perceptron variant AVP, its budgeted
//! approximation Ahpatron (halving plus projection), the classical kernel
//! Perceptron, two simple budget baselines, and post-hoc checks of the
//! mistake bounds these algorithms satisfy.
//!
//! Modules:
//!
//! - [`kernel`]: sparse instances, labels, kernel functions, Gram matrices.
//! - [`hypothesis`]: kernel expansions with cached Gram and norm.
//! - [`solver`]: the regularized projection solve used when halving.
//! - [`learners`]: learner configuration, per-round outcomes, online runs.
//! - [`diagnostics`]: metrics, comparators, kernel alignment, bound reports.
//! - [`data`]: LIBSVM parsing, seeded permutation and synthetic streams.
//! - [`rng`]: the seeded generator every randomized step draws from.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod hypothesis;
pub mod kernel;
pub mod learners;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use hypothesis::Expansion;
pub use kernel::{KernelSpec, Label, LabeledExample, SparseVector};
