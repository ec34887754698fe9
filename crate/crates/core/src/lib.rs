//! Numerical machinery for nonlocal kinetic Fokker-Planck equations driven by
//! non-degenerate symmetric alpha-stable noise: stable Levy symbols, the
//! Fourier representation of the kinetic semigroup and its resolvent,
//! Monte Carlo sampling of the underlying SDE, the Boltzmann collision
//! operator in Carleman form, and the anisotropic kinetic geometry.

pub mod boltzmann;
pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod monte_carlo;
pub mod quadrature;
pub mod semigroup;
pub mod stable_levy;

pub use coefficients::{CoefficientPath, CoefficientPathSpec};
pub use error::{CoreError, Result};
pub use semigroup::{SourceSpec, SpectralField};
pub use stable_levy::{LevySymbol, StableMeasure};
