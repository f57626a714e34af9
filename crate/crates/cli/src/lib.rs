//! Command-line front end: run configuration, JSON-lines records and the
//! command implementations.

pub mod config;
pub mod record;
pub mod run;
