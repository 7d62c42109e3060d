//! Filtered finite differences for the nonlinear Klein–Gordon equation
//! `ε² u_tt − u_xx + u/ε² + λ|u|²u = 0` with modulated plane-wave data,
//! together with envelope reference solvers and analysis tools.

pub mod analysis;
pub mod error;
pub mod field;
pub mod filters;
pub mod params;
pub mod reference;
pub mod roots;
pub mod scheme;

pub use error::{Error, Result};
pub use field::{EnvelopeField, GridField, PeriodicGrid, WaveField};
pub use filters::{Angle, FilterValues};
pub use params::{Branch, FilterParams, PhysicalSetup, StabilityReport};
