//! Command-line front end for readtrace: stimulus preparation, the study
//! service, the processing pipeline and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod server;
