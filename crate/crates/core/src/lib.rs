//! Copula-based correlation (CC) and partial correlation (CPC): estimation,
//! asymptotic inference and sure independence screening for
//! ultrahigh-dimensional data.

pub mod cc;
pub mod cli;
pub mod cpc;
pub mod dataio;
pub mod empirical;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod quantreg;
pub mod screening;
pub mod simbench;

pub use error::{Error, Result};
