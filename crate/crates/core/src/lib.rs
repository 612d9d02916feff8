//! Training-free relational feature synthesis.
//!
//! Compresses the variably-sized relational neighborhood of each target-table
//! row into a fixed-width, column-aligned feature vector. Every output column
//! is produced by one (meta-path, source column, aggregator chain) plan, so a
//! downstream in-context learner sees samples whose columns line up across
//! rows. The crate also ships a weighted message-passing reference model used
//! to check that the plan semantics need no trained weights, and a simulation
//! lab for encoder-ablation and convergence-rate experiments on synthetic
//! single-table data.

pub mod error;
pub use error::{Error, Result};

pub mod config;
pub mod exec;
pub mod icl;
pub mod mpgnn;
pub mod plan;
pub mod randdb;
pub mod rdb;
pub mod relgraph;
pub mod synthlab;
