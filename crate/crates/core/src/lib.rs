pub mod corpus;
pub mod backtranslation;
pub mod critics;
pub mod error;
pub mod eval;
pub mod generate;
pub mod mechanical;
pub mod minilang;
pub mod model;
pub mod pipeline;
pub mod representation;
pub mod seeding;

pub use error::{Error, Result};
