//! Measurement pipeline: down-conversion, phase correction, correlations,
//! multiplexing, polarization and inseparability.

pub mod correlation;
pub mod dsp;
pub mod insep;
pub mod multiplex;
pub mod polarization;

pub use correlation::{
    autocorrelate, correlate, rase_transform, subtract_vacuum_autocorr, CorrAccumulator, CorrelationKind,
    CorrelationResult,
};
pub use dsp::{demodulate, phase_correct, prepare, PhaseCorrection};
pub use insep::{inseparability, insep_model, squeezing_db, InsepOptions, InsepResult, Moments};
pub use multiplex::{multiplex_analysis, MultiplexAccumulator, MultiplexResult, MultiplexSpec};
pub use polarization::{beat_length, polarization_metrics, shot_powers, PolarizationMetrics, ShotPowers};
