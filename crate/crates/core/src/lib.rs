//! Deterministic simulator for CSP-style Go programs with execution
//! concurrency tracing, post-mortem analyzers, concurrency coverage and a
//! delay-injection fuzzer.

pub mod dsl;
pub mod event;
pub mod runtime;
pub mod trace;
pub mod analysis;
pub mod coverage;
pub mod corpus;
pub mod fuzz;
