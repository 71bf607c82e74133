//! Sofic approximations of finitely presented groups, microstate model
//! spaces, resampling-walk connectors between good models, and cocycle
//! cohomology of finite Schreier graphs.

pub mod cli;
pub mod cohomology;
pub mod error;
pub mod model;
pub mod popa;
pub mod presentation;
pub mod rng;
pub mod snf;
pub mod sofic;
pub mod walk;

pub use error::{Error, Result};
