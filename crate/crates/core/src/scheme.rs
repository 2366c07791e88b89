//! Optical transitions of the four-level memory and their spectral layout.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Reference optical frequency that transition offsets are quoted against, in GHz.
pub const REFERENCE_FREQ_GHZ: f64 = 194_918.0;

/// Optical inhomogeneous linewidth of the host crystal, in MHz.
pub const DEFAULT_INHOMOGENEOUS_LINEWIDTH: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionLabel {
    PiI,
    Ase,
    Pi1,
    Pi2,
    Rase,
}

impl TransitionLabel {
    pub const ALL: [TransitionLabel; 5] = [
        TransitionLabel::PiI,
        TransitionLabel::Ase,
        TransitionLabel::Pi1,
        TransitionLabel::Pi2,
        TransitionLabel::Rase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransitionLabel::PiI => "pi_i",
            TransitionLabel::Ase => "ASE",
            TransitionLabel::Pi1 => "pi_1",
            TransitionLabel::Pi2 => "pi_2",
            TransitionLabel::Rase => "RASE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub label: TransitionLabel,
    /// Oscillator strength as a fraction of the ASE transition.
    pub rel_oscillator_strength: f64,
    /// MHz relative to [`REFERENCE_FREQ_GHZ`].
    pub freq_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelScheme {
    pub transitions: Vec<Transition>,
    /// MHz.
    pub optical_inhomogeneous_linewidth: f64,
}

impl LevelScheme {
    /// Build a scheme from tabulated percentages (any common scale); strengths
    /// are renormalised so the strongest transition is 1.
    pub fn from_percentages(rows: &[(TransitionLabel, f64, f64)], linewidth: f64) -> Result<Self> {
        let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        ensure(max > 0.0, "transitions", || "no positive oscillator strength".into())?;
        let scheme = LevelScheme {
            transitions: rows
                .iter()
                .map(|&(label, pct, offset)| Transition {
                    label,
                    rel_oscillator_strength: pct / max,
                    freq_offset: offset,
                })
                .collect(),
            optical_inhomogeneous_linewidth: linewidth,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.transitions.len() == 5, "transitions", || {
            format!("expected 5 transitions, found {}", self.transitions.len())
        })?;
        for label in TransitionLabel::ALL {
            let n = self.transitions.iter().filter(|t| t.label == label).count();
            ensure(n == 1, "transitions", || {
                format!("label {} appears {n} times", label.as_str())
            })?;
        }
        for t in &self.transitions {
            let s = t.rel_oscillator_strength;
            ensure(s > 0.0 && s <= 1.0, "rel_oscillator_strength", || {
                format!("{} has strength {s}, outside (0, 1]", t.label.as_str())
            })?;
            ensure(t.freq_offset.is_finite(), "freq_offset", || {
                format!("{} offset is not finite", t.label.as_str())
            })?;
        }
        let strongest: Vec<_> = self
            .transitions
            .iter()
            .filter(|t| t.rel_oscillator_strength == 1.0)
            .collect();
        ensure(
            strongest.len() == 1 && strongest[0].label == TransitionLabel::Ase,
            "rel_oscillator_strength",
            || "the ASE transition must be the unique strongest transition".into(),
        )?;
        for (i, a) in self.transitions.iter().enumerate() {
            for b in &self.transitions[i + 1..] {
                if a.freq_offset == b.freq_offset {
                    return Err(Error::invalid(
                        "freq_offset",
                        format!("{} and {} share offset {}", a.label.as_str(), b.label.as_str(), a.freq_offset),
                    ));
                }
            }
        }
        ensure(
            self.optical_inhomogeneous_linewidth > 0.0,
            "optical_inhomogeneous_linewidth",
            || "must be positive".into(),
        )
    }

    pub fn get(&self, label: TransitionLabel) -> &Transition {
        self.transitions
            .iter()
            .find(|t| t.label == label)
            .expect("validated scheme holds every label")
    }
}

/// The Er:Y2SiO5 site-2 level scheme at 6 T.
pub fn default_level_scheme() -> LevelScheme {
    use TransitionLabel::*;
    LevelScheme::from_percentages(
        &[
            (PiI, 3.2, -430.36),
            (Ase, 89.6, 363.75),
            (Pi1, 7.3, -538.14),
            (Pi2, 7.0, 974.97),
            (Rase, 81.7, 268.33),
        ],
        DEFAULT_INHOMOGENEOUS_LINEWIDTH,
    )
    .expect("tabulated scheme is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use TransitionLabel::*;

    #[test]
    fn default_scheme_ratios() {
        let s = default_level_scheme();
        assert_eq!(s.get(Ase).rel_oscillator_strength, 1.0);
        let rase = s.get(Rase).rel_oscillator_strength;
        assert!((rase - 81.7 / 89.6).abs() < 1e-12);
        assert!((rase - 0.912).abs() < 5e-4);
        let split = s.get(Ase).freq_offset - s.get(Rase).freq_offset;
        assert!((split - 95.42).abs() < 1e-9);
        let pi1 = s.get(Pi1).rel_oscillator_strength;
        assert!((pi1 - 0.0815).abs() < 5e-5);
        // Text quotes 7.3% relative to ASE = 100%; the table uses ASE = 89.6%.
        assert!((pi1 * 100.0 - 7.3).abs() < 0.9);
    }

    #[test]
    fn rejects_duplicate_offsets() {
        let mut s = default_level_scheme();
        s.transitions[0].freq_offset = s.transitions[1].freq_offset;
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_missing_label() {
        let mut s = default_level_scheme();
        s.transitions[0].label = Ase;
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_tied_strongest() {
        let mut s = default_level_scheme();
        s.transitions[4].rel_oscillator_strength = 1.0;
        assert!(s.validate().is_err());
    }
}
