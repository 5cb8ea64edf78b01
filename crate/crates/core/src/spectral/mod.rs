//! Fourier representation of fields on the unit torus.

pub mod checkpoint;
mod dealias;
mod fft;
mod field;
mod grid;
mod norms;

pub use dealias::{dealias, pad, physical_oversampled, product, restrict, DealiasRule};
pub(crate) use dealias::{banded_divergence_packed, padded_gradient_packed, truncate_two_thirds};
pub use field::{bilaplacian_symbol, frac_symbol, laplacian_symbol, RealField, SpectralField, VectorField};
pub use grid::{Grid, WavenumberScale};
pub use norms::{grad_lp_pow, grad_sup, norm, norm_oversampled, NormKind};
