pub mod energy;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod initdata;
pub mod linear;
pub mod multipliers;
pub mod nonlinear;
pub mod residual;
pub mod ode;
pub mod spectral;

pub use error::{Error, Result};
