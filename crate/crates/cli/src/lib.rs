//! Batch experiments on Martin kernels, harmonic measures and conformal
//! measures.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod suite;
