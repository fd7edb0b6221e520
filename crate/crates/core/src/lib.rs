pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
