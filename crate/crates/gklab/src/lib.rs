pub mod banded;
pub mod cli;
pub mod error;
pub mod field;
pub mod flow;
pub mod geom;
pub mod hopf;
pub mod report;
pub mod soliton;
