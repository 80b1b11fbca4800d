//! Mean mixtures of multivariate normal distributions and predictive density
//! estimation under Kullback–Leibler loss.

pub mod error;
pub mod mixing;
pub mod mmn;
pub mod posterior;
pub mod predictive;
pub mod quad;
pub mod risk;
pub mod rng;
pub mod specfn;

pub use error::{MmnError, Result};
