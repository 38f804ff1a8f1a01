//! Truncated least-squares rotation search: data matrices, synthetic instances, the
//! TLS objective and its exact solvers, the semidefinite relaxation with a
//! first-order solver, closed-form tightness certificates and refutations, error
//! bounds, and the experiment batteries.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix `f64`, which is what the batteries and the CLI use.

pub mod bounds;
pub mod cert;
pub mod error;
pub mod experiments;
pub mod jsonf;
pub mod linalg;
pub mod rotmath;
pub mod scalar;
pub mod sdr;
pub mod synth;
pub mod tls;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Quaternion = rotmath::UnitQuaternion<f64>;
pub type Rotation = rotmath::Rotation<f64>;
pub type DataMatrix = rotmath::DataMatrix<f64>;
pub type Instance = synth::Instance<f64>;
pub type Thresholds = tls::TruncationParams<f64>;
pub type TlsSolution = tls::TlsSolution<f64>;
pub type Certificate = cert::Certificate<f64>;
pub type TightnessReport = cert::TightnessReport<f64>;
pub type BigMatrix = sdr::BigMatrix<f64>;
pub type SdrSolution = sdr::SdrSolution<f64>;
