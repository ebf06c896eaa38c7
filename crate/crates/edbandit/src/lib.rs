//! File formats, the replicated experiment harness and CLI support for
//! [`edbandit_core`].
//!
//! - [`formats`]: instance JSON and ratings/clusters CSV.
//! - [`config`]: the experiment configuration document.
//! - [`harness`]: seeded, scheduling-independent replication of runs.
//! - [`report`]: trace CSV, summary JSON and diagnostics records.

pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod report;

pub use error::{Error, Result};
