//! Library side of the `mazenav` binary: configuration and self-checks.

pub mod checks;
pub mod config;
