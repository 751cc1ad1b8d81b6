pub mod bench;
pub mod corpus;
mod cpp;
pub mod error;
pub mod metrics;
pub mod prompt;
pub mod providers;
pub mod retrieval;
pub mod store;
pub mod synthetic;
pub mod tokenizer;

pub use error::{Error, Result};
