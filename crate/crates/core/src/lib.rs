//! Off-policy evaluation for finite-horizon MDPs by fitted Q-evaluation
//! over B-spline sieves, with the equivalent marginal importance sampling
//! weights, basis-size selection and a replicated experiment harness.

pub mod basis;
pub mod cli;
pub mod env;
pub mod error;
pub mod experiments;
pub mod fqe;
pub mod integrate;
pub mod mis;
pub mod policy;
pub mod regress;
pub mod selection;

pub use error::{Error, Result};
