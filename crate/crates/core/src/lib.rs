//! Toolkit for translating natural-language questions into MongoDB queries:
//! query parsing, an in-memory document engine, relational-to-document
//! transformation, evaluation metrics, example retrieval and the multi-step
//! generation and dataset-construction pipelines.

pub mod dataset;
pub mod engine;
pub mod metrics;
pub mod provider;
pub mod query;
pub mod retrieval;
pub mod smart;
pub mod transform;
pub mod value;

pub use value::{DocValue, Document};
