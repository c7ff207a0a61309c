//! Version-migration repair for Solidity contracts.
//!
//! The pipeline compiles a contract with the target compiler, slices the code
//! around the first error, retrieves matching breaking-change knowledge,
//! prompts a model for SEARCH/REPLACE edits, applies them and recompiles,
//! for a bounded number of iterations.

pub mod compiler;
pub mod dataset;
pub mod knowledge;
pub mod llm;
pub mod metrics;
pub mod patch;
pub mod prompt;
pub mod repair;
pub mod retriever;
pub mod slicer;
pub mod version;
