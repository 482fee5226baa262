//! Joint beamforming and RIS design for rate-splitting MIMO downlinks under
//! finite-blocklength coding, trading worst-user latency against worst-user
//! energy efficiency.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: scenario constants, channels, RIS coefficients, beamformers;
//! * [`fbl`]: normal-approximation rates, power, EE, delay and the objective;
//! * [`surrogate`]: concave quadratic minorants of the rates;
//! * [`conic`]: second-order cone subproblems and the solver adapter;
//! * [`ao`]: the alternating majorization-minimization driver;
//! * [`sim`]: channel generation, Monte Carlo plans, oracles and exporters.

// `!(x >= y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao;
pub mod conic;
pub mod error;
pub mod fbl;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
