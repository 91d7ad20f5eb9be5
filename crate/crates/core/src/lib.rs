//! Community event forecasting on continuous-time dynamic graphs.
//!
//! A temporal-attention GNN encodes the history graph into node states; a
//! hierarchical point-process head then forecasts the next events of a node
//! community one at a time (time, then source, then destination), and a
//! message-passing GRU folds every forecast event back into the states.
//!
//! Numeric code is generic over [`Real`]; [`Cep3F64`] and [`Cep3F32`] are
//! the concrete model types used by the CLI and tests.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scalar;
pub mod tensor;
pub mod ctdg;
pub mod encoder;
pub mod forecaster;
pub mod ar_update;
pub mod baselines;
pub mod model;
pub mod training;
pub mod evaluation;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Cep3, ModelConfig};
pub use scalar::Real;

/// Double-precision model.
pub type Cep3F64 = Cep3<f64>;
/// Single-precision model.
pub type Cep3F32 = Cep3<f32>;
