//! File formats, dataset directories and the `i2p` command line.

mod bytes;
pub mod cli;
pub mod cloud;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fsutil;
pub mod i2pw;
pub mod manifest;
pub mod report;
pub mod svt;

pub use error::{Error, Result};
