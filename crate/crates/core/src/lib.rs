//! Analytic eigenbranches of parameterized spectral problems.

pub mod branches;
pub mod concentration;
pub mod control;
pub mod linalg;
pub mod schrodinger;
pub mod spectrum;
pub mod torus;
pub mod weyl;
