//! Numerical laboratory for viscous heating of a gas driven by a
//! divergence-free body force.
//!
//! * [`gauss_moments`]: Gaussian brackets and closure identities.
//! * [`kinetic`]: velocity grids, reduced distributions, moments, H-functional.
//! * [`bgk`]: finite-difference BGK solver with specular walls.
//! * [`dsmc`]: hard-sphere direct simulation Monte Carlo.
//! * [`cns`]: unidirectional compressible Navier–Stokes reduction.
//! * [`steady_ns`]: pseudospectral steady Navier–Stokes on the 3-torus.
//! * [`diagnostics`]: log-log growth exponents.

pub mod gauss_moments;
pub mod kinetic;
pub mod steady_ns;
pub mod bgk;
pub mod cns;
pub mod diagnostics;
pub mod dsmc;
