//! Effective stochastic models of field-driven colloidal assembly.
//!
//! The crate covers the whole chain from particle simulation to reduced
//! dynamics:
//!
//! - [`bd`]: overdamped Brownian dynamics in a quadrupole field,
//! - [`order`]: radius of gyration and bond-orientational order,
//! - [`featurize`]: alignment and kernel density fields,
//! - [`dmaps`]: Diffusion Maps, coordinate selection, Nyström restriction,
//! - [`km`]: Kramers-Moyal drift/diffusivity estimation from bursts,
//! - [`nn`]: neural drift/diffusivity trained on the Euler-Maruyama likelihood,
//! - [`free_energy`]: effective potentials from fitted models,
//! - [`pipeline`]: configuration, sampling and the staged end-to-end run.

pub mod bd;
pub mod dmaps;
pub mod error;
pub mod featurize;
pub mod free_energy;
pub mod grid;
pub mod km;
pub mod kv;
pub mod nn;
pub mod order;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod sde;
pub mod table;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
