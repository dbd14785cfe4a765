//! Arithmetic and analytic kernels for central derivatives of Rankin-Selberg
//! L-functions over real quadratic fields.
// Index loops mirror the matrix formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
pub mod abelian;
pub mod cache;
pub mod dirichlet;
pub mod eisenstein;
pub mod error;
pub mod lfunc;
pub mod linalg;
pub mod newform;
pub mod numeric;
pub mod par;
pub mod qspace;
pub mod quadorder;
pub mod reglift;
pub mod suite;
pub mod theta;
pub mod weilrep;
