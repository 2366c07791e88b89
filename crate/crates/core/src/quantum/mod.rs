//! Gaussian continuous-variable engine and synthetic shot records.

mod state;
mod synth;

pub use state::{
    apply_channel, db_to_gain, omega, rase_state, sample_raw, sample_shots, shot_covariance, ChannelOp,
    GaussianState, Quadratures,
};
pub use synth::{
    draw_injection, inject, layout, synthesize_orthogonal, synthesize_shots, synthesize_trace, Injection, Layout,
    OrthogonalMix, SynthParams,
};
