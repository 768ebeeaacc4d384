//! Multi-hop reading comprehension over a heterogeneous document-entity graph.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod parallel;
pub mod scoring;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
