//! Experiment runner and verification surface around `mixmax-core`.
//!
//! `run` executes a named experiment from a JSON config (or a previous run's
//! manifest) over seeded trials and writes a per-trial CSV together with a
//! manifest that reproduces the run byte for byte. `verify` drives the
//! independent verification suites and reports worst margins.

pub mod config;
pub mod experiments;
pub mod output;
pub mod suites;
