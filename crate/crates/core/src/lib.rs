//! Extremal quantile regression for post-processing point forecasts.
//!
//! Linear quantile regression is fitted on a grid of intermediate levels; the
//! resulting predictions at a covariate point feed a Hill-type tail index,
//! pooled over the training covariates, which extrapolates the lowest
//! intermediate quantile to far-tail levels.
//!
//! ```
//! use exqr::model::{fit_extremal, predict_extreme, KChoice};
//! use exqr::qr::QuantileLevel;
//! use exqr::synth::{generate, SynthSpec};
//!
//! let spec = SynthSpec { n: 500, gamma: 0.25, a0: 1.0, a1: 1.0, seed: 1 };
//! let train = generate(&spec).unwrap().dataset().unwrap();
//! let tau = QuantileLevel::new(0.9999).unwrap();
//! let model = fit_extremal(&train, KChoice::Fixed(40), 0.1, &[tau]).unwrap();
//! let q = predict_extreme(&model, &[0.5], tau).unwrap();
//! assert!(q.value > 0.0);
//! ```

pub mod error;
pub mod eval;
pub mod evt;
pub mod model;
pub mod pipeline;
pub mod qr;
pub mod synth;

pub use error::{Error, Result};
