//! Library side of the command-line front end: synthetic data generation and
//! the benchmark harness. The binary in `main.rs` is a thin argument-parsing
//! layer over this and over `lopt-core`.

#![forbid(unsafe_code)]

pub mod datagen;
pub mod experiments;
