//! Compromise test decisions for hybrid-control two-arm trials.
//!
//! The crate links prior-data conflict in the control arm to allowances for
//! type I error inflation and power loss, and evaluates the resulting
//! decision rules (and competing dynamic-borrowing rules) by closed form,
//! quadrature, Monte Carlo and exact enumeration.

pub mod binomial;
pub mod borrow;
pub mod error;
pub mod normal;
pub mod numerics;
pub mod oc;
pub mod rule;
pub mod scenario;

pub use error::{Error, Result};
