//! Pipeline driver behind the `prsafe` binary.

pub mod config;
pub mod frame;
pub mod pipeline;
