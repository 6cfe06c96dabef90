//! Independent numerical checks of the closed-form pipeline.

pub mod discrete;
pub mod montecarlo;
pub mod poisson;
pub mod quadrature;
