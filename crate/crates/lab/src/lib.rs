//! Std companion to `rigidity-core`: configuration, seeded random corpora,
//! report formats and the worker pool behind the CLI.

pub mod config;
pub mod corpus;
pub mod pool;
pub mod report;
pub mod run;
