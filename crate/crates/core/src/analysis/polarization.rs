//! Polarization suppression and the mode-mixing bound.
//!
//! An aligned shot set and an orthogonal-polarization shot set are reduced to
//! per-shot powers. Suppression compares their excess powers, and the
//! orthogonal ASE↔RASE correlation tells how much of the orthogonal RASE is
//! still the time-reversed ASE.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::dsp::{demodulate, phase_correct};
use crate::error::{ensure, Error, Result};
use crate::trace::{TimeTrace, WindowKind};

/// Per-shot quantities, all in units of vacuum power per sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShotPowers {
    pub ase: f64,
    pub rase: f64,
    pub vacuum: f64,
    /// Summed matched-filter power of all references, noise floor removed.
    pub reference: f64,
    /// Lag-0 ASE × mirrored RASE correlation.
    pub cross: Complex64,
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

/// Reduce one raw shot: references are read before down-conversion, the
/// field windows after it.
pub fn shot_powers(trace: &TimeTrace, cutoff_khz: f64) -> Result<ShotPowers> {
    let pc = phase_correct(trace)?;
    let reference = pc
        .references
        .iter()
        .map(|r| {
            let noise = r.amplitude / r.snr;
            r.amplitude.powi(2) - noise.powi(2)
        })
        .sum();
    let bb = demodulate(&pc.trace, trace.het_freq - trace.mix_freq, cutoff_khz)?;
    let a = bb.window(bb.first_window(WindowKind::Ase)?);
    let r = bb.window(bb.first_window(WindowKind::Rase)?);
    let v = bb.window(bb.first_window(WindowKind::Vacuum)?);
    let l = a.len().min(r.len());
    ensure(l > 0, "windows", || "empty ASE/RASE window".into())?;
    let cross = (0..l).map(|t| a[t] * r[l - 1 - t]).sum::<Complex64>() / l as f64;
    Ok(ShotPowers {
        ase: mean_power(a),
        rase: mean_power(r),
        vacuum: mean_power(v),
        reference,
        cross,
    })
}

/// Value with a one-standard-error uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    fn of(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count() as f64;
        let mu = xs.clone().sum::<f64>() / n;
        let var = if n > 1.0 {
            xs.map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: mu,
            error: (var / n).sqrt(),
        }
    }

    fn rel(&self) -> f64 {
        if self.value != 0.0 {
            self.error / self.value.abs()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationMetrics {
    pub suppression_ase: Estimate,
    pub suppression_rase: Estimate,
    pub suppression_ref: Estimate,
    /// Fraction of orthogonal RASE power correlated with orthogonal ASE.
    pub orth_correlated_fraction: Estimate,
    /// Orthogonal RASE power fraction that is not the time reverse of its ASE.
    pub mixing_bound: Estimate,
    pub n_aligned: usize,
    pub n_orth: usize,
}

struct SetPowers {
    ase: Estimate,
    rase: Estimate,
    reference: Estimate,
    cross: Estimate,
}

fn reduce(shots: &[ShotPowers]) -> SetPowers {
    let vac = Estimate::of(shots.iter().map(|s| s.vacuum)).value;
    let mean_cross = shots.iter().map(|s| s.cross).sum::<Complex64>() / shots.len() as f64;
    let dir = if mean_cross.norm() > 0.0 {
        mean_cross / mean_cross.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    SetPowers {
        ase: Estimate::of(shots.iter().map(move |s| s.ase - vac)),
        rase: Estimate::of(shots.iter().map(move |s| s.rase - vac)),
        reference: Estimate::of(shots.iter().map(|s| s.reference)),
        // project onto the mean phase so the magnitude error is a real variance
        cross: Estimate::of(shots.iter().map(move |s| (s.cross * dir.conj()).re)),
    }
}

fn ratio(num: Estimate, den: Estimate) -> Estimate {
    let q = num.value / den.value;
    Estimate {
        value: q,
        error: q.abs() * (num.rel().powi(2) + den.rel().powi(2)).sqrt(),
    }
}

fn suppression(orth: Estimate, aligned: Estimate, what: &str) -> Result<Estimate> {
    if aligned.value <= 0.0 {
        return Err(Error::invalid(
            "aligned",
            format!("aligned {what} excess power is {} (not positive)", aligned.value),
        ));
    }
    let q = ratio(Estimate { value: orth.value.max(0.0), ..orth }, aligned);
    Ok(Estimate {
        value: 1.0 - q.value,
        error: q.error,
    })
}

pub fn polarization_metrics(aligned: &[ShotPowers], orth: &[ShotPowers]) -> Result<PolarizationMetrics> {
    ensure(aligned.len() >= 2 && orth.len() >= 2, "shots", || {
        format!("need at least 2 shots per set, got {} aligned and {} orthogonal", aligned.len(), orth.len())
    })?;
    let a = reduce(aligned);
    let o = reduce(orth);
    let s_ase = suppression(o.ase, a.ase, "ASE")?;
    let s_rase = suppression(o.rase, a.rase, "RASE")?;
    let s_ref = suppression(o.reference, a.reference, "reference")?;

    let denom = o.ase.value * o.rase.value;
    let f = if denom > 0.0 {
        let v = (o.cross.value.powi(2) / denom).min(1.0);
        Estimate {
            value: v,
            error: v * ((2.0 * o.cross.rel()).powi(2) + o.ase.rel().powi(2) + o.rase.rel().powi(2)).sqrt(),
        }
    } else {
        Estimate { value: 0.0, error: 0.0 }
    };
    let q = 1.0 - s_rase.value;
    let mixing = Estimate {
        value: (1.0 - f.value) * q,
        error: ((q * f.error).powi(2) + ((1.0 - f.value) * s_rase.error).powi(2)).sqrt(),
    };
    Ok(PolarizationMetrics {
        suppression_ase: s_ase,
        suppression_rase: s_rase,
        suppression_ref: s_ref,
        orth_correlated_fraction: f,
        mixing_bound: mixing,
        n_aligned: aligned.len(),
        n_orth: orth.len(),
    })
}

/// Polarization beat length in mm for wavelength `wavelength_nm` and
/// birefringence `delta_n`.
pub fn beat_length(wavelength_nm: f64, delta_n: f64) -> Result<f64> {
    ensure(delta_n > 0.0 && delta_n.is_finite(), "delta_n", || {
        format!("{delta_n} must be > 0")
    })?;
    ensure(wavelength_nm > 0.0, "wavelength_nm", || format!("{wavelength_nm} must be > 0"))?;
    Ok(wavelength_nm * 1e-6 / delta_n)
}
