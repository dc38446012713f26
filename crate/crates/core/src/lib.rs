//! Short paths in groups of compactly supported diffeomorphisms and the
//! fractional Sobolev norms that price them.

pub mod cli;
pub mod construction;
pub mod error;
pub mod diffeo;
pub mod field_norms;
pub mod grid;
pub mod oracle;

pub use error::{Error, Result};
