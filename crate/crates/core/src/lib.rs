//! Fractal (PH⁰) dimension of hypothesis sets under a loss-based pseudo-metric.

pub mod bounds;
pub mod cli;
pub mod dimest;
pub mod matrix_io;
pub mod metric;
pub mod ph0;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trainer;
