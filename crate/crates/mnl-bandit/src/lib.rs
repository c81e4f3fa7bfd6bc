//! Multinomial-logit (MNL) bandit toolkit.
//!
//! The library is organized around the per-round loop of a revenue-maximizing
//! agent facing a K-option discrete-choice model with an outside option:
//!
//! - [`model`] - the MNL choice probabilities, their derivative structure and
//!   closed-form bounds on the problem constants `kappa` and `L`;
//! - [`estimation`] - regularized maximum-likelihood fitting of the stacked
//!   parameter vector from interaction history;
//! - [`confidence`] - confidence-set radii, Gram-matrix maintenance and
//!   exploration bonuses;
//! - [`policy`] - the UCB agent and its control variants;
//! - [`simulator`] - synthetic problem generation, episode execution and
//!   multi-seed batch aggregation;
//! - [`selfcheck`] - fast runnable subset of the analytic property suite.
//!
//! All numeric code is generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the `*64` aliases below pin the default `f64` build.

// Validation code uses `!(x > 0)` deliberately: it rejects NaN along with
// out-of-range values, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};

pub mod confidence;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod quadrature;
pub mod selfcheck;
pub mod simulator;

pub use error::{Error, Result};

/// Floating-point scalar the whole crate is generic over.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + ScalarOperand + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum
        + ScalarOperand
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Convenience aliases for the default double-precision instantiation.
pub type ParameterVector64 = model::ParameterVector<f64>;
pub type History64 = estimation::InteractionHistory<f64>;
pub type GramState64 = confidence::GramState<f64>;
pub type Agent64 = policy::Agent<f64>;
pub type Instance64 = simulator::ProblemInstance<f64>;
pub type Trace64 = simulator::RegretTrace<f64>;
