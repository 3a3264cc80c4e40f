//! Library side of the `cfprobe` command: configuration, pipeline stages and
//! the mock model server.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod serve;
