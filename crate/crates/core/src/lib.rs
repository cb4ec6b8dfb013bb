//! Analysis of linear systems whose input and output channels are
//! accessed one at a time at random.

pub mod channels;
pub mod cli;
pub mod error;
pub mod exactmath;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
