//! Derivative-matrix chains, singular-value bounds and numerical oracles for
//! multiple trigonometric integrals `∫_Ω exp(2πi F(x)) dx` with polynomial
//! phase `F`.

pub mod bounds;
pub mod chain;
pub mod coarea;
pub mod ddouble;
pub mod domain;
pub mod linalg;
pub mod measure;
pub mod optimize;
pub mod oracle;
pub mod poly;
pub mod qmc;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod spectral;
