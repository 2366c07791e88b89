//! Down-conversion and phase-reference correction.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::spectral::{bin_freq, delay, fft, ifft};
use crate::trace::{TimeTrace, WindowKind};

/// Minimum matched-filter SNR of a usable reference.
pub const REFERENCE_SNR_THRESHOLD: f64 = 5.0;
/// Offsets (MHz) of the off-tone probes used to measure the noise floor.
const NOISE_PROBES: [f64; 4] = [-3.5, -2.5, 2.5, 3.5];
const JITTER_SEARCH: f64 = 0.5;
const JITTER_GRID: usize = 4000;

/// Mix down by `freq` MHz and low-pass at `cutoff_khz`.
///
/// The low-pass has a real Gaussian response with its −3 dB point at the
/// cutoff, so it has zero group delay (window timestamps stay valid) and the
/// autocorrelation of filtered vacuum is itself a Gaussian. Filtering is
/// circular over the record, which makes it commute exactly with the
/// circular jitter correction; records begin and end in vacuum, so the wrap
/// only mixes vacuum.
pub fn demodulate(trace: &TimeTrace, freq: f64, cutoff_khz: f64) -> Result<TimeTrace> {
    let sr = trace.sample_rate;
    let nyq = sr / 2.0;
    let fc = cutoff_khz * 1e-3;
    ensure(freq.is_finite() && freq.abs() < nyq, "freq", || {
        format!("{freq} MHz is not below Nyquist ({nyq} MHz)")
    })?;
    ensure(fc > 0.0 && fc < nyq, "cutoff", || {
        format!("{cutoff_khz} kHz must be positive and below Nyquist ({nyq} MHz)")
    })?;
    let m = trace.samples.len();
    let mut buf: Vec<Complex64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| s * Complex64::from_polar(1.0, -2.0 * PI * freq * trace.time(i)))
        .collect();
    fft(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= lowpass_response(bin_freq(k, m, sr), fc);
    }
    ifft(&mut buf);
    Ok(TimeTrace {
        samples: buf,
        mix_freq: trace.mix_freq + freq,
        ..trace.clone()
    })
}

/// Amplitude response of the demodulation filter at `f` for cutoff `fc` (MHz).
pub fn lowpass_response(f: f64, fc: f64) -> f64 {
    (-0.5 * LN_2 * (f / fc).powi(2)).exp()
}

/// Matched-filter estimate of one phase reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEstimate {
    pub freq: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCorrection {
    pub trace: TimeTrace,
    /// Estimated trigger jitter δt, µs (observed record is the true one advanced by δt).
    pub jitter: f64,
    /// Estimated interferometer phase, rad, wrapped to (−π, π].
    pub phase: f64,
    pub references: Vec<ReferenceEstimate>,
}

fn tone_sum(trace: &TimeTrace, range: std::ops::Range<usize>, freq: f64) -> Complex64 {
    range
        .map(|i| trace.samples[i] * Complex64::from_polar(1.0, -2.0 * PI * freq * trace.time(i)))
        .sum()
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Measure every reference window of the trace.
pub fn measure_references(trace: &TimeTrace) -> Result<Vec<ReferenceEstimate>> {
    let mut out = Vec::new();
    for w in trace.windows_of(WindowKind::Reference) {
        let f = w.ref_freq.expect("validated reference windows carry a frequency");
        let r = trace.range(w);
        let local = f - trace.mix_freq;
        let z = tone_sum(trace, r.clone(), local);
        let noise = (NOISE_PROBES
            .iter()
            .map(|d| tone_sum(trace, r.clone(), local + d).norm_sqr())
            .sum::<f64>()
            / NOISE_PROBES.len() as f64)
            .sqrt();
        let snr = if noise > 0.0 { z.norm() / noise } else { f64::INFINITY };
        if snr < REFERENCE_SNR_THRESHOLD {
            return Err(Error::WeakReference {
                freq: f,
                snr,
                threshold: REFERENCE_SNR_THRESHOLD,
            });
        }
        out.push(ReferenceEstimate {
            freq: f,
            phase: z.arg(),
            amplitude: z.norm(),
            snr,
        });
    }
    ensure(out.len() >= 2, "windows", || {
        format!("phase correction needs at least 2 reference windows, found {}", out.len())
    })?;
    Ok(out)
}

/// Solve φ_k = φ0 + 2π f_k δt for (δt, φ0).
///
/// A grid search over δt finds the branch maximising the coherent sum, then
/// a weighted least-squares fit on the unwrapped phases refines it.
pub fn solve_jitter_phase(refs: &[ReferenceEstimate]) -> (f64, f64) {
    let coherence = |dt: f64| {
        refs.iter()
            .map(|r| Complex64::from_polar(r.snr.min(1e6), r.phase - 2.0 * PI * r.freq * dt))
            .sum::<Complex64>()
            .norm()
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..JITTER_GRID {
        let dt = -JITTER_SEARCH + 2.0 * JITTER_SEARCH * k as f64 / JITTER_GRID as f64;
        let c = coherence(dt);
        if c > best.0 {
            best = (c, dt);
        }
    }
    let dt0 = best.1;
    let phi0 = refs
        .iter()
        .map(|r| Complex64::from_polar(r.snr.min(1e6), r.phase - 2.0 * PI * r.freq * dt0))
        .sum::<Complex64>()
        .arg();
    // Residuals relative to the grid solution are small, so unwrap there.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in refs {
        let w = r.snr.min(1e6).powi(2);
        let x = 2.0 * PI * r.freq;
        let y = wrap(r.phase - phi0 - x * dt0);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    let (ddt, dphi) = if det.abs() > 0.0 {
        ((sw * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    } else {
        (0.0, 0.0)
    };
    (dt0 + ddt, wrap(phi0 + dphi))
}

/// Undo a known jitter and phase: out(t) = e^{−iφ}·e^{−i2π·mix·δt}·s(t − δt).
pub fn apply_correction(trace: &TimeTrace, jitter: f64, phase: f64) -> TimeTrace {
    let rot = Complex64::from_polar(1.0, -phase - 2.0 * PI * trace.mix_freq * jitter);
    let samples = delay(&trace.samples, jitter, trace.sample_rate)
        .into_iter()
        .map(|z| z * rot)
        .collect();
    TimeTrace {
        samples,
        ..trace.clone()
    }
}

pub fn phase_correct(trace: &TimeTrace) -> Result<PhaseCorrection> {
    let references = measure_references(trace)?;
    let (jitter, phase) = solve_jitter_phase(&references);
    Ok(PhaseCorrection {
        trace: apply_correction(trace, jitter, phase),
        jitter,
        phase,
        references,
    })
}

/// Phase-correct on the raw record, then demodulate to baseband.
pub fn prepare(trace: &TimeTrace, cutoff_khz: f64) -> Result<TimeTrace> {
    let pc = phase_correct(trace)?;
    demodulate(&pc.trace, trace.het_freq - trace.mix_freq, cutoff_khz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{inject, Injection};
    use crate::trace::WindowSpec;

    fn refs_trace() -> TimeTrace {
        let sr = 100.0;
        let n = 2000;
        let freqs = [8.0, -12.0, 15.0];
        let mut windows = Vec::new();
        let mut s = vec![Complex64::default(); n];
        for (k, f) in freqs.iter().enumerate() {
            let start = 1.0 + 4.0 * k as f64;
            windows.push(WindowSpec::reference(start, 4.0, *f));
            let c = start + 2.0;
            for (i, z) in s.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *z += Complex64::from_polar(10.0 * (-(t - c).powi(2) / (2.0 * 0.0625)).exp(), 2.0 * PI * f * t);
            }
        }
        TimeTrace::new(sr, s, 13.0, windows, 0).unwrap()
    }

    #[test]
    fn tone_to_dc() {
        let sr = 100.0;
        let s: Vec<_> = (0..4000)
            .map(|i| Complex64::from_polar(2.0, 2.0 * PI * 13.0 * i as f64 / sr + 0.3))
            .collect();
        let t = TimeTrace::new(sr, s, 13.0, vec![], 0).unwrap();
        let d = demodulate(&t, 13.0, 280.0).unwrap();
        assert_eq!(d.mix_freq, 13.0);
        for z in &d.samples {
            assert!((z - Complex64::from_polar(2.0, 0.3)).norm() < 1e-9, "{z}");
        }
        assert!(demodulate(&t, 13.0, 50_000.0).is_err());
        assert!(demodulate(&t, 60.0, 280.0).is_err());
    }

    #[test]
    fn exact_inversion_noiseless() {
        let t = refs_trace();
        let inj = Injection {
            jitter: 0.02,
            phase: 1.0,
        };
        let obs = TimeTrace {
            samples: inject(&t.samples, t.sample_rate, inj),
            ..t.clone()
        };
        let pc = phase_correct(&obs).unwrap();
        assert!((pc.jitter - 0.02).abs() < 1e-9, "{}", pc.jitter);
        assert!((pc.phase - 1.0).abs() < 1e-9, "{}", pc.phase);
        let err = pc.trace.samples.iter().zip(&t.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn one_reference_rejected() {
        let mut t = refs_trace();
        t.windows.truncate(1);
        assert!(phase_correct(&t).is_err());
    }

    #[test]
    fn weak_reference_named() {
        let mut t = refs_trace();
        t.windows.push(WindowSpec::reference(14.0, 4.0, 3.0));
        match phase_correct(&t) {
            Err(Error::WeakReference { freq, .. }) => assert_eq!(freq, 3.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correction_commutes_with_demodulation() {
        let t = refs_trace();
        let a = demodulate(&apply_correction(&t, 0.013, 0.4), 13.0, 5000.0).unwrap();
        let b = apply_correction(&demodulate(&t, 13.0, 5000.0).unwrap(), 0.013, 0.4);
        let err = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
