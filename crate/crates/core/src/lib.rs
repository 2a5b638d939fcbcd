//! Particle and Fokker-Planck approximation of McKean-Vlasov equations driven
//! by fractional Brownian motion with Hurst index `H ∈ (1/2, 1)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fbm;
pub mod fokker_planck;
pub mod measure;
pub mod particle;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
