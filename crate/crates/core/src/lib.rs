//! Automated feature engineering by exploring a graph of dataset
//! transformations under an evaluation budget.

pub mod cli;
pub mod data;
pub mod eval;
pub mod explore;
pub mod graph;
pub mod policy;
pub mod seeds;
pub mod transforms;
