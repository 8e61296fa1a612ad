pub mod error;
pub mod eval;
pub mod filter;
pub mod fol;
pub mod pram;
pub mod prior;
pub mod transition;

pub use error::{Error, Result};
