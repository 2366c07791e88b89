//! Simulator and analysis workbench for the four-level rephased amplified
//! spontaneous emission (RASE) quantum memory.
//!
//! Conventions used throughout: time in µs, frequency in MHz, sample rate in
//! samples/µs, and quadratures normalised so vacuum has variance 1.

pub mod analysis;
pub mod config;
pub mod decay;
pub mod error;
pub mod gain;
pub mod optim;
pub mod pipeline;
pub mod quantum;
pub mod scheme;
pub mod seed;
pub mod sequence;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
pub use num_complex::Complex64;
