//! Simulation and stationary analysis of an explosive two-dimensional PDMP
//! neuron model, its delayed mean-field network and the McKean-Vlasov limit.

pub mod cli;
pub mod control;
pub mod current;
pub mod dynamics;
pub mod error;
pub mod hazard;
pub mod meanfield;
pub mod model;
pub mod network;
pub mod pdmp;
pub mod ode;
pub mod rng;
pub mod stationary;

pub use control::Control;
pub use current::{Kappa, KappaPath};
pub use error::{Error, Result};
pub use model::{ModelSpec, State};
