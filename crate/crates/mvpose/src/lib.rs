//! File formats, synthetic data, the streaming pipeline and benchmarks on
//! top of `mvpose-core`.

pub mod bench;
mod error;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ExitKind, Result};
