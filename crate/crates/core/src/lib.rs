//! Pseudo-spectral laboratory for the thin-film growth equation
//! `u_t + Delta^2 u = -div(|grad u|^{p-2} grad u)` on the unit 2-torus,
//! with optional incompressible advection.

pub mod error;
pub mod experiments;
pub mod flows;
pub mod model;
pub mod persist;
pub mod quadrature;
pub mod registry;
pub mod semigroup;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use flows::FlowSpec;
pub use model::ModelParams;
pub use solvers::Trajectory;
pub use spectral::{Grid, SpectralField, WavenumberScale};
