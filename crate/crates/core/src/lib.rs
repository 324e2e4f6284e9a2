//! Quasi-Hermitian spin-boson model with a moving boundary.
//!
//! The core is generic over `f32`/`f64`; the aliases below fix `f64`,
//! which is what the command-line tool and the acceptance suite use.

pub mod dyson;
pub mod error;
pub mod evolution;
pub mod operators;
pub mod perturbation;
pub mod quadrature;
pub mod scalar;
pub mod spectra;
pub mod trajectories;
pub mod transitions;

pub use error::{ModelError, Result};
pub use operators::{HilbertSpec, Spin};
pub use spectra::Branch;

pub type Complex = scalar::C<f64>;
pub type Matrix = operators::OperatorMatrix<f64>;
pub type Operators = operators::OperatorTable<f64>;
pub type Params = trajectories::ParameterSet<f64>;
pub type Effective = trajectories::EffectiveParams<f64>;
pub type TimeFn = trajectories::TimeFunction<f64>;
pub type Model = dyson::ModelOperators<f64>;
pub type Protocol = transitions::Protocol<f64>;
pub type State = evolution::StateVector<f64>;
