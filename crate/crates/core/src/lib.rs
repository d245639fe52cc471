//! Identification of servovalve dynamics: plant models, simulation, harmonic
//! analysis, parameter fitting and the DSS static-characteristic loop.

pub mod cli;
pub mod dss;
pub mod error;
pub mod fit;
pub mod harmonic;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
