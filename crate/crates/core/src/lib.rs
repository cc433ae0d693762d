//! Counterfactual impact analysis of discrete events on daily term-frequency
//! series built from message corpora.

pub mod config;
pub mod control;
pub mod corpus;
pub mod error;
pub mod events;
pub mod impact;
pub mod lexicon;
pub mod pipeline;
pub mod plot;
pub mod seed;
pub mod series;
pub mod sim;
pub mod ssm;
pub mod taxonomy;

pub use error::{Error, Result};
