//! Library surface of the CLI crate, exposed so integration tests can parse
//! configs and manifests directly.

// Validation code uses `!(x > 0)` deliberately: it rejects NaN along with
// out-of-range values, which `x <= 0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod config;
pub mod manifest;
