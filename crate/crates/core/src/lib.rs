pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod kar;
pub mod kernel;
pub mod mtcg;
pub mod negatives;
pub mod run;

pub use error::{Error, Result};
