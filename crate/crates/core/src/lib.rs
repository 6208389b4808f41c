//! Pseudo-spectral simulation of the super-critically dissipative surface
//! quasi-geostrophic equation, together with the numerical side of its
//! modulus-of-continuity regularity certificate.

pub mod initial;
pub mod kernel;
pub mod moc;
pub mod monitor;
pub mod quadrature;
pub mod solver;
pub mod spectral;
