//! File formats, task-serving backend, automatic annotator gateway and
//! command line for MQM re-annotation campaigns. The metrics, planner and
//! data model live in `mqm_reanno_core`, re-exported here as `core`.

pub use mqm_reanno_core as core;

pub mod cli;
mod error;
pub mod gateway;
pub mod http;
pub mod io;
pub mod report;
pub mod service;

pub use error::{Error, Result};
