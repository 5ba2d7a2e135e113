pub mod certificates;
pub mod cli;
pub mod costs;
pub mod dictlearn;
pub mod error;
pub mod gauge;
mod homotopy;
pub mod json;
pub mod minmax;
pub mod oracle;
pub mod problem;
pub mod suite;
