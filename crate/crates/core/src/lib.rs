//! Alpha-Fisher geometry of the density power (BHHJ) divergence on
//! finite-support parametric models, with a generalized Cramér–Rao bound,
//! robust estimation and Monte-Carlo experiment drivers.

pub mod bound;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod model;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Pmf, ParametricFamily, ProductModel};
