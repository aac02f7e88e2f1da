pub mod channel;
pub mod cli;
pub mod enhancement;
pub mod error;
pub mod io;
mod interior;
pub mod matrix;
pub mod pdf;
pub mod rates;

pub use error::{Error, Result};
