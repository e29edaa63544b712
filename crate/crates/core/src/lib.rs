//! Simulation and calibration of the ground-state spin dynamics of a single
//! nitrogen-vacancy center under piecewise-constant laser and microwave
//! control.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: rate parameters, state vector and the generator matrix;
//! - [`propagate`]: matrix-exponential propagation (production path);
//! - [`oracle`]: adaptive Runge-Kutta integration (independent check);
//! - [`sequence`]: pulse sequences and the experimental protocols;
//! - [`observables`]: fluorescence intensity and spin projection;
//! - [`fit`]: nonlinear least-squares estimation of rate parameters.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod propagate;
pub mod sequence;

pub use error::{Error, Result};
pub use fit::{Dataset, FitOptions, FitProblem, FitResult, FreeParam, Protocol};
pub use model::{
    build_generator, mixing_coefficients, Controls, Generator, ParamName, RateParams, StateVector,
};
pub use observables::{IntensitySample, Readout};
pub use propagate::{propagate, propagate_sampled, Trajectory};
pub use sequence::{PulseSequence, Segment, ZenoProtocolConfig};
