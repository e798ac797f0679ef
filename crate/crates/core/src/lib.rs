//! Projection correlation kernels with the division property and their
//! de Branges space description.
//!
//! * [`specfun`]: Gamma, the entire Bessel series, complex-step derivatives.
//! * [`kernels`]: sine, discrete sine and Bessel kernels, kernel matrices.
//! * [`debranges`]: Hermite–Biehler functions, de Branges kernels and the
//!   factorization and gauge verifiers.
//! * [`krein`]: the constructive passage from a finite-rank space with the
//!   division property to `(E, Φ)`.
//! * [`dpp`]: determinantal sampling and Monte-Carlo checks of the
//!   determinant identity.

mod dd;
mod linalg;
pub mod poly;

pub mod debranges;
pub mod dpp;
pub mod kernels;
pub mod krein;
pub mod specfun;

pub use num_complex::Complex64;
