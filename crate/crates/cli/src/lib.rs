//! `fsmt`: command-line tools and the end-to-end pipeline.

pub mod commands;
pub mod config;
pub mod demo;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pipeline;
