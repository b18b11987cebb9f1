//! Optimal causal estimation of a stochastic (Ornstein-Uhlenbeck) optical
//! phase measured through a nonlinear SU(1,1) interferometer or a
//! Mach-Zehnder interferometer with adaptive homodyne feedback.

pub mod error;
pub mod gain;
pub mod interferometer;
pub mod mse;
pub mod ou;
pub mod quadrature;
pub mod simulate;
pub mod sweep;
pub mod wiener;

pub use error::ModelError;
pub use interferometer::{InstrumentKind, InterferometerConfig, PhotocurrentModel};
pub use ou::ProcessParams;
pub use wiener::{EstimationMode, ObservationSpectrum, WienerSolution};
