//! Numerical study of the degenerate wave equation
//! `∂_t² u - b(t) ∂_x(a(x) ∂_x u) = 0` on a periodic interval, with `b`
//! Hölder-regular and `a` of Gevrey class, both allowed to vanish.

// Bounds are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod coefficients;
pub mod energy;
pub mod error;
pub mod solver;
pub mod spectral_grid;
pub mod symbol_calculus;
pub mod table;
pub mod weyl_quantize;

pub use error::{Error, Result};
