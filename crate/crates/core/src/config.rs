//! Experiment configuration and its validation.

use serde::{Deserialize, Serialize};

use crate::decay::{self, DecayFit};
use crate::error::{ensure, Error, Result};
use crate::scheme::{default_level_scheme, LevelScheme};
use crate::trace::DEFAULT_SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossBudget {
    pub cryostat_window_loss: f64,
    pub heterodyne_bs_loss: f64,
    pub detector_qe_loss: f64,
}

impl LossBudget {
    pub const NONE: LossBudget = LossBudget {
        cryostat_window_loss: 0.0,
        heterodyne_bs_loss: 0.0,
        detector_qe_loss: 0.0,
    };

    /// Crystal-to-detector transmission ℓ.
    pub fn transmission(&self) -> f64 {
        (1.0 - self.cryostat_window_loss) * (1.0 - self.heterodyne_bs_loss) * (1.0 - self.detector_qe_loss)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("losses.cryostat_window_loss", self.cryostat_window_loss),
            ("losses.heterodyne_bs_loss", self.heterodyne_bs_loss),
            ("losses.detector_qe_loss", self.detector_qe_loss),
        ] {
            ensure((0.0..1.0).contains(&v), name, || format!("{v} is outside [0, 1)"))?;
        }
        Ok(())
    }
}

impl Default for LossBudget {
    fn default() -> Self {
        LossBudget {
            cryostat_window_loss: 0.24,
            heterodyne_bs_loss: 0.50,
            detector_qe_loss: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// MHz.
    pub het_freq: f64,
    /// MHz, beat frequencies of the phase-reference pulses.
    pub ref_freqs: Vec<f64>,
    /// kHz.
    pub lpf_cutoff: f64,
    /// µs, half-width of the uniform trigger jitter.
    pub trigger_jitter_max: f64,
    /// rad per shot.
    pub interferometer_phase_drift_std: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            het_freq: 13.0,
            ref_freqs: vec![8.0, -12.0, 15.0],
            lpf_cutoff: 280.0,
            trigger_jitter_max: 0.05,
            interferometer_phase_drift_std: 0.5,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        ensure(self.ref_freqs.len() >= 2, "detection.ref_freqs", || {
            format!("need at least 2 references to solve jitter and phase, got {}", self.ref_freqs.len())
        })?;
        let mut all = vec![self.het_freq];
        all.extend(&self.ref_freqs);
        for (i, a) in all.iter().enumerate() {
            ensure(a.is_finite() && a.abs() < sample_rate / 2.0, "detection", || {
                format!("frequency {a} MHz is not below Nyquist ({} MHz)", sample_rate / 2.0)
            })?;
            for b in &all[i + 1..] {
                if a == b {
                    return Err(Error::invalid(
                        "detection.ref_freqs",
                        format!("{a} MHz appears twice among het_freq and ref_freqs"),
                    ));
                }
            }
        }
        ensure(
            self.lpf_cutoff > 0.0 && self.lpf_cutoff * 1e-3 < sample_rate / 2.0,
            "detection.lpf_cutoff",
            || format!("{} kHz must be positive and below Nyquist", self.lpf_cutoff),
        )?;
        ensure(self.trigger_jitter_max >= 0.0, "detection.trigger_jitter_max", || {
            "must be non-negative".into()
        })?;
        ensure(
            self.interferometer_phase_drift_std >= 0.0,
            "detection.interferometer_phase_drift_std",
            || "must be non-negative".into(),
        )
    }
}

fn default_recall_efficiency() -> f64 {
    0.17
}
fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}
fn default_analysis_window() -> f64 {
    13.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: LevelScheme,
    pub t_a: f64,
    pub t_b: f64,
    /// Power gain on the ASE transition.
    pub gain_db: f64,
    /// Write-time 1/e constant, µs.
    pub write_time_t: f64,
    pub storage_envelope: DecayFit,
    pub losses: LossBudget,
    pub detection: DetectionConfig,
    pub n_shots: u64,
    pub base_seed: u64,
    /// Recall efficiency η at the configured delays.
    #[serde(default = "default_recall_efficiency")]
    pub recall_efficiency: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Length of the ASE and RASE analysis windows, µs.
    #[serde(default = "default_analysis_window")]
    pub analysis_window: f64,
}

impl Default for ExperimentConfig {
    /// Low-gain entanglement run.
    fn default() -> Self {
        ExperimentConfig {
            scheme: default_level_scheme(),
            t_a: 20.0,
            t_b: 0.1,
            gain_db: 7.0,
            write_time_t: 157.8,
            storage_envelope: decay::storage_time_fit(),
            losses: LossBudget::default(),
            detection: DetectionConfig::default(),
            n_shots: 5000,
            base_seed: 7,
            recall_efficiency: default_recall_efficiency(),
            sample_rate: default_sample_rate(),
            analysis_window: default_analysis_window(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::parse("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        ensure(self.t_a.is_finite() && self.t_a > 0.0, "t_a", || format!("{} must be > 0", self.t_a))?;
        ensure(self.t_b.is_finite() && self.t_b >= 0.0, "t_b", || format!("{} must be >= 0", self.t_b))?;
        ensure(self.gain_db.is_finite() && self.gain_db >= 0.0, "gain_db", || {
            format!("{} must be >= 0", self.gain_db)
        })?;
        ensure(self.write_time_t > 0.0, "write_time_t", || "must be > 0 (use a large value for none)".into())?;
        ensure(self.storage_envelope.t_1e > 0.0, "storage_envelope.t_1e", || "must be > 0".into())?;
        ensure(self.n_shots >= 1, "n_shots", || "must be >= 1".into())?;
        ensure(
            (0.0..=1.0).contains(&self.recall_efficiency),
            "recall_efficiency",
            || format!("{} is outside [0, 1]", self.recall_efficiency),
        )?;
        ensure(self.sample_rate.is_finite() && self.sample_rate > 0.0, "sample_rate", || {
            "must be > 0".into()
        })?;
        ensure(
            self.analysis_window > 0.0 && self.analysis_window < self.t_a,
            "analysis_window",
            || format!("{} must be positive and shorter than t_a = {}", self.analysis_window, self.t_a),
        )?;
        self.losses.validate()?;
        self.detection.validate(self.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_losses_give_0304() {
        assert!((LossBudget::default().transmission() - 0.304).abs() < 1e-15);
    }

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["bogus"] = 1.into();
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invariant_violations_rejected() {
        let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.t_a = 0.0),
            Box::new(|c| c.t_b = -1.0),
            Box::new(|c| c.n_shots = 0),
            Box::new(|c| c.gain_db = -3.0),
            Box::new(|c| c.losses.detector_qe_loss = 1.0),
            Box::new(|c| c.detection.ref_freqs = vec![8.0]),
            Box::new(|c| c.detection.ref_freqs = vec![8.0, 13.0]),
            Box::new(|c| c.detection.lpf_cutoff = 0.0),
        ];
        for f in cases {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            assert!(c.validate().unwrap_err().is_validation());
        }
    }
}
