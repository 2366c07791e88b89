//! Synthetic heterodyne shot records.
//!
//! The ASE field `A` and the atomic field `S` are produced together from two
//! white vacuum inputs by a frequency-resolved two-mode squeezer whose gain
//! follows the spectral feature. After rephasing, the atoms re-emit `S`
//! time-reversed: light that left at time `t` before π1 comes back at the
//! mirrored time after π2. Detection losses, vacuum, the phase-reference
//! pulses and the carrier are then added, and finally the per-shot trigger
//! jitter and interferometer phase are applied to the whole record.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DetectionConfig, ExperimentConfig};
use crate::error::{ensure, Error, Result};
use crate::quantum::state::db_to_gain;
use crate::seed::{shot_seed, sub_rng};
use crate::sequence::PulseSequence;
use crate::spectral::{bin_freq, delay, fast_len, fft, ifft};
use crate::trace::{TimeTrace, WindowKind, WindowSpec, DEFAULT_SAMPLE_RATE};

const GUARD: f64 = 1.0;
const TAIL: f64 = 2.0;

mod stream {
    pub const ASE_IN: u64 = 0;
    pub const ATOM_IN: u64 = 1;
    pub const DETECT: u64 = 2;
    pub const RECALL: u64 = 3;
    pub const INJECT: u64 = 4;
    pub const ORTH_ASE_IN: u64 = 5;
    pub const ORTH_ATOM_IN: u64 = 6;
}

/// A second detected polarization whose ASE carries a fraction of the
/// aligned gain and whose RASE is only partly correlated with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalMix {
    /// Excess ASE/RASE power relative to the aligned polarization.
    pub power_fraction: f64,
    /// Fraction of the orthogonal RASE power correlated with the orthogonal ASE.
    pub correlated_fraction: f64,
    /// Power fraction of the reference pulses leaking through.
    pub reference_leak: f64,
}

impl Default for OrthogonalMix {
    fn default() -> Self {
        OrthogonalMix {
            power_fraction: 0.06,
            correlated_fraction: 0.8,
            reference_leak: 0.009,
        }
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// samples/µs.
    pub sample_rate: f64,
    pub gain_db: f64,
    /// Power recall efficiency at storage time `decay_reference`.
    pub recall_efficiency: f64,
    /// Crystal-to-detector power transmission.
    pub transmission: f64,
    /// Write-time constant T in µs; infinity disables the decay and is
    /// written as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub write_time: f64,
    /// Storage time (µs before π1) at which `recall_efficiency` holds.
    /// `None` uses the centre of the analysis window.
    pub decay_reference: Option<f64>,
    /// FWHM of the ASE amplitude autocorrelation, µs.
    pub correlation_fwhm: f64,
    /// Length of the annotated ASE and RASE windows, µs.
    pub analysis_window: f64,
    pub vacuum_window: f64,
    pub reference_window: f64,
    pub reference_amplitude: f64,
    /// Gaussian σ of each reference pulse, µs.
    pub reference_sigma: f64,
    /// Peak amplitude of the coherent probe when the sequence has an input.
    pub input_amplitude: f64,
    pub detection: DetectionConfig,
    /// Add the random trigger jitter and interferometer phase.
    pub inject: bool,
    /// Include the quantum noise (vacuum inputs). Off gives a deterministic
    /// record of the coherent parts only.
    pub quantum_noise: bool,
    pub polarization: Option<OrthogonalMix>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            sample_rate: DEFAULT_SAMPLE_RATE,
            gain_db: 7.0,
            recall_efficiency: 0.17,
            transmission: 0.304,
            write_time: 157.8,
            decay_reference: None,
            correlation_fwhm: 1.95,
            analysis_window: 13.2,
            vacuum_window: 3.0 * 13.2,
            reference_window: 4.0,
            reference_amplitude: 100.0,
            reference_sigma: 0.25,
            input_amplitude: 3.0,
            detection: DetectionConfig::default(),
            inject: true,
            quantum_noise: true,
            polarization: None,
        }
    }
}

impl SynthParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        SynthParams {
            sample_rate: cfg.sample_rate,
            gain_db: cfg.gain_db,
            recall_efficiency: cfg.recall_efficiency,
            transmission: cfg.losses.transmission(),
            write_time: cfg.write_time_t,
            analysis_window: cfg.analysis_window,
            vacuum_window: 3.0 * cfg.analysis_window,
            detection: cfg.detection.clone(),
            ..SynthParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.sample_rate.is_finite() && self.sample_rate > 0.0, "sample_rate", || {
            format!("{} must be > 0", self.sample_rate)
        })?;
        ensure(self.gain_db.is_finite() && self.gain_db >= 0.0, "gain_db", || {
            format!("{} must be >= 0", self.gain_db)
        })?;
        ensure((0.0..=1.0).contains(&self.recall_efficiency), "recall_efficiency", || {
            format!("{} is outside [0, 1]", self.recall_efficiency)
        })?;
        ensure(
            self.transmission > 0.0 && self.transmission <= 1.0,
            "transmission",
            || format!("{} is outside (0, 1]", self.transmission),
        )?;
        ensure(self.write_time > 0.0, "write_time", || "must be > 0".into())?;
        for (name, v) in [
            ("correlation_fwhm", self.correlation_fwhm),
            ("analysis_window", self.analysis_window),
            ("vacuum_window", self.vacuum_window),
            ("reference_window", self.reference_window),
            ("reference_sigma", self.reference_sigma),
        ] {
            ensure(v.is_finite() && v > 0.0, name, || format!("{v} must be > 0"))?;
        }
        ensure(
            self.reference_window >= 8.0 * self.reference_sigma,
            "reference_window",
            || "must span at least ±4 reference σ".into(),
        )?;
        if let Some(m) = &self.polarization {
            for (name, v) in [
                ("polarization.power_fraction", m.power_fraction),
                ("polarization.correlated_fraction", m.correlated_fraction),
                ("polarization.reference_leak", m.reference_leak),
            ] {
                ensure((0.0..=1.0).contains(&v), name, || format!("{v} is outside [0, 1]"))?;
            }
        }
        self.detection.validate(self.sample_rate)
    }

    /// Gaussian σ of the excess-gain profile in MHz, fixed by the requested
    /// autocorrelation width.
    pub fn gain_sigma(&self) -> f64 {
        let sigma_t = self.correlation_fwhm / (2.0 * (2.0 * LN_2).sqrt());
        1.0 / (2.0 * PI * sigma_t)
    }

    fn gain_at(&self, g0: f64, f: f64) -> f64 {
        let s = self.gain_sigma();
        1.0 + (g0 - 1.0) * (-f * f / (2.0 * s * s)).exp()
    }

    /// Amplitude decay for light stored `tau` µs before π1, relative to the
    /// reference storage time.
    fn decay(&self, tau: f64, tau_ref: f64) -> f64 {
        if self.write_time.is_infinite() {
            1.0
        } else {
            (-2.0 * (tau - tau_ref) / self.write_time).exp()
        }
    }
}

/// Absolute sample layout of one synthetic record.
#[derive(Debug, Clone)]
pub struct Layout {
    pub offset: f64,
    pub ase: (usize, usize),
    /// Sample index of π1 start plus that of π2 end: sample i maps to J−1−i.
    pub mirror: usize,
    pub pi1: usize,
    pub len: usize,
    pub windows: Vec<WindowSpec>,
    pub ref_centres: Vec<f64>,
}

fn idx(t: f64, sr: f64) -> usize {
    (t * sr).round() as usize
}

pub fn layout(seq: &PulseSequence, p: &SynthParams) -> Result<Layout> {
    seq.validate()?;
    let sr = p.sample_rate;
    let (e0, e1) = seq
        .ase_interval()
        .ok_or_else(|| Error::invalid("sequence", "synthesis needs a πi pulse to create gain"))?;
    let n_ref = p.detection.ref_freqs.len() as f64;
    let offset = p.vacuum_window + n_ref * p.reference_window + GUARD;
    ensure(p.analysis_window <= e1 - e0 + 1e-9, "analysis_window", || {
        format!(
            "{} us ASE window does not fit between πi and π1 ({} us), it would overlap a pulse",
            p.analysis_window,
            e1 - e0
        )
    })?;
    if let Some(inp) = seq.input() {
        ensure(inp.start >= e0 && inp.end() <= e1, "sequence.input", || {
            "input pulse must lie between πi and π1".into()
        })?;
    }
    let pi1 = offset + seq.pi1().start;
    let pi2_end = offset + seq.pi2().end();
    let (_, r1) = seq.rase_interval().expect("interval exists when ASE does");
    let end = (offset + r1).max(offset + seq.end()).max(pi2_end + p.analysis_window) + TAIL;

    let mut windows = vec![WindowSpec::new(WindowKind::Vacuum, 0.0, p.vacuum_window)];
    let mut ref_centres = Vec::new();
    for (k, &f) in p.detection.ref_freqs.iter().enumerate() {
        let start = p.vacuum_window + k as f64 * p.reference_window;
        windows.push(WindowSpec::reference(start, p.reference_window, f));
        ref_centres.push(start + 0.5 * p.reference_window);
    }
    windows.push(WindowSpec::new(WindowKind::Ase, pi1 - p.analysis_window, p.analysis_window));
    windows.push(WindowSpec::new(WindowKind::Rase, pi2_end, p.analysis_window));
    if let Some(inp) = seq.input() {
        windows.push(WindowSpec::new(WindowKind::Input, offset + inp.start, inp.duration));
        let echo = seq.mirror_time(inp.end());
        windows.push(WindowSpec::new(WindowKind::Echo, offset + echo, inp.duration));
    }
    Ok(Layout {
        offset,
        ase: (idx(offset + e0, sr), idx(offset + e1, sr)),
        mirror: idx(pi1, sr) + idx(pi2_end, sr),
        pi1: idx(pi1, sr),
        len: idx(end, sr),
        windows,
        ref_centres,
    })
}

fn white(rng: &mut ChaCha8Rng, n: usize, on: bool) -> Vec<Complex64> {
    if !on {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

/// Squeeze two white inputs into (A, S) over `n` samples with gain `g0` at
/// line centre. `probe` is added to the ASE input before amplification.
fn squeeze_pair(
    p: &SynthParams,
    g0: f64,
    seed: u64,
    streams: (u64, u64),
    n: usize,
    probe: Option<&[Complex64]>,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let sr = p.sample_rate;
    let sigma_t = p.correlation_fwhm / (2.0 * (2.0 * LN_2).sqrt());
    let pad = (6.0 * sigma_t * sr).ceil() as usize;
    let m = fast_len(n + 2 * pad);
    let mut a = white(&mut sub_rng(seed, streams.0), m, p.quantum_noise);
    let mut b = white(&mut sub_rng(seed, streams.1), m, p.quantum_noise);
    if let Some(x) = probe {
        for (ai, xi) in a[pad..pad + n].iter_mut().zip(x) {
            *ai += xi;
        }
    }
    fft(&mut a);
    fft(&mut b);
    let mut fa = vec![Complex64::new(0.0, 0.0); m];
    let mut fs = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m {
        let g = p.gain_at(g0, bin_freq(k, m, sr));
        let (c, s) = (g.sqrt(), (g - 1.0).sqrt());
        let nk = (m - k) % m;
        fa[k] = c * a[k] + s * b[nk].conj();
        fs[k] = c * b[k] + s * a[nk].conj();
    }
    ifft(&mut fa);
    ifft(&mut fs);
    (fa[pad..pad + n].to_vec(), fs[pad..pad + n].to_vec())
}

/// Detected record of one polarization at baseband, before the carrier and
/// the references are added.
fn detected_fields(
    seq: &PulseSequence,
    p: &SynthParams,
    lay: &Layout,
    seed: u64,
    g0: f64,
    orth: Option<&OrthogonalMix>,
) -> Vec<Complex64> {
    let sr = p.sample_rate;
    let (i0, i1) = lay.ase;
    let n = i1 - i0;
    let probe = seq.input().filter(|_| p.input_amplitude != 0.0).map(|inp| {
        let c = lay.offset + inp.start + 0.5 * inp.duration;
        let sig = inp.duration / (2.0 * (2.0 * LN_2).sqrt());
        (0..n)
            .map(|k| {
                let t = (i0 + k) as f64 / sr;
                Complex64::new(p.input_amplitude * (-(t - c).powi(2) / (2.0 * sig * sig)).exp(), 0.0)
            })
            .collect::<Vec<_>>()
    });
    let streams = if orth.is_some() {
        (stream::ORTH_ASE_IN, stream::ORTH_ATOM_IN)
    } else {
        (stream::ASE_IN, stream::ATOM_IN)
    };
    let (a, s) = squeeze_pair(p, g0, seed, streams, n, probe.as_deref());

    // Orthogonal RASE partly comes from an independent field of the same power.
    let uncorrelated = orth.map(|_| {
        let (u, _) = squeeze_pair(p, g0, seed, (stream::ORTH_ATOM_IN + 2, stream::ORTH_ATOM_IN + 3), n, None);
        u
    });

    let det_stream = if orth.is_some() { stream::DETECT + 16 } else { stream::DETECT };
    let mut rec = white(&mut sub_rng(seed, det_stream), lay.len, p.quantum_noise);
    let vac = white(&mut sub_rng(seed, stream::RECALL + if orth.is_some() { 16 } else { 0 }), n, p.quantum_noise);
    let l = p.transmission;
    let (tl, vl) = (l.sqrt(), (1.0 - l).sqrt());
    for k in 0..n {
        rec[i0 + k] = tl * a[k] + vl * rec[i0 + k];
    }
    let tau_ref = p.decay_reference.unwrap_or(0.5 * p.analysis_window);
    let f = orth.map_or(1.0, |m| m.correlated_fraction);
    for k in 0..n {
        let i = i0 + k;
        let j = lay.mirror - 1 - i;
        if j >= lay.len {
            continue;
        }
        let tau = (lay.pi1 as f64 - i as f64 - 0.5) / sr;
        let d = p.decay(tau, tau_ref);
        let eta = (p.recall_efficiency * d * d).min(1.0);
        let mut r = -(f * eta).sqrt() * s[k] + (1.0 - eta).max(0.0).sqrt() * vac[k];
        if let Some(u) = &uncorrelated {
            r += ((1.0 - f) * eta).sqrt() * u[k];
        }
        rec[j] = tl * r + vl * rec[j];
    }
    rec
}

fn add_carrier_and_refs(rec: &mut [Complex64], p: &SynthParams, lay: &Layout, ref_scale: f64) {
    let sr = p.sample_rate;
    let het = p.detection.het_freq;
    let sig2 = 2.0 * p.reference_sigma * p.reference_sigma;
    let amp = p.reference_amplitude * ref_scale;
    for (i, z) in rec.iter_mut().enumerate() {
        let t = i as f64 / sr;
        *z *= Complex64::from_polar(1.0, 2.0 * PI * het * t);
        for (&c, &f) in lay.ref_centres.iter().zip(&p.detection.ref_freqs) {
            let d = t - c;
            if d.abs() < 10.0 * p.reference_sigma {
                *z += Complex64::from_polar(amp * (-d * d / sig2).exp(), 2.0 * PI * f * t);
            }
        }
    }
}

/// Per-shot trigger jitter (µs) and interferometer phase (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Injection {
    pub jitter: f64,
    pub phase: f64,
}

pub fn draw_injection(det: &DetectionConfig, seed: u64) -> Injection {
    let mut rng = sub_rng(seed, stream::INJECT);
    let jitter = if det.trigger_jitter_max > 0.0 {
        rng.random_range(-det.trigger_jitter_max..=det.trigger_jitter_max)
    } else {
        0.0
    };
    let phase = Normal::new(0.0, det.interferometer_phase_drift_std)
        .map(|n| n.sample(&mut rng))
        .unwrap_or(0.0);
    Injection { jitter, phase }
}

/// Observed record: obs(t) = e^{iφ}·true(t + δt).
pub fn inject(samples: &[Complex64], sample_rate: f64, inj: Injection) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, inj.phase);
    delay(samples, -inj.jitter, sample_rate).into_iter().map(|z| z * rot).collect()
}

fn build(seq: &PulseSequence, p: &SynthParams, seed: u64, orth: bool) -> Result<(TimeTrace, Injection)> {
    p.validate()?;
    let lay = layout(seq, p)?;
    let mix = p.polarization.as_ref().filter(|_| orth);
    let g0 = match mix {
        Some(m) => 1.0 + m.power_fraction * (db_to_gain(p.gain_db) - 1.0),
        None => db_to_gain(p.gain_db),
    };
    let mut rec = detected_fields(seq, p, &lay, seed, g0, mix);
    add_carrier_and_refs(&mut rec, p, &lay, mix.map_or(1.0, |m| m.reference_leak.sqrt()));
    let inj = if p.inject {
        draw_injection(&p.detection, seed)
    } else {
        Injection::default()
    };
    let samples = if p.inject { inject(&rec, p.sample_rate, inj) } else { rec };
    let trace = TimeTrace::new(p.sample_rate, samples, p.detection.het_freq, lay.windows, seed)?;
    Ok((trace, inj))
}

/// One synthetic shot. Returns the record and the injected jitter and phase.
pub fn synthesize_trace(seq: &PulseSequence, p: &SynthParams, seed: u64) -> Result<(TimeTrace, Injection)> {
    build(seq, p, seed, false)
}

/// The orthogonal-polarization record of the same shot; the injection
/// matches [`synthesize_trace`] for the same seed.
pub fn synthesize_orthogonal(seq: &PulseSequence, p: &SynthParams, seed: u64) -> Result<(TimeTrace, Injection)> {
    ensure(p.polarization.is_some(), "polarization", || {
        "orthogonal synthesis needs polarization parameters".into()
    })?;
    build(seq, p, seed, true)
}

/// `n` shots seeded from `base_seed`, generated in parallel.
pub fn synthesize_shots(seq: &PulseSequence, p: &SynthParams, base_seed: u64, n: usize) -> Result<Vec<TimeTrace>> {
    p.validate()?;
    layout(seq, p)?;
    (0..n as u64)
        .into_par_iter()
        .map(|k| synthesize_trace(seq, p, shot_seed(base_seed, k)).map(|(t, _)| t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{build_i4le, build_rase};

    #[test]
    fn infinite_write_time_round_trips() {
        let p = SynthParams { write_time: f64::INFINITY, ..SynthParams::default() };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"write_time\":null"));
        assert_eq!(serde_json::from_str::<SynthParams>(&s).unwrap(), p);
    }

    fn quiet() -> SynthParams {
        SynthParams {
            inject: false,
            ..SynthParams::default()
        }
    }

    #[test]
    fn gain_profile_width() {
        let p = SynthParams::default();
        assert!((p.gain_sigma() - 0.1922).abs() < 1e-3);
    }

    #[test]
    fn layout_windows_mirror() {
        let seq = build_rase(20.0, 0.1, 1.0).unwrap();
        let p = quiet();
        let lay = layout(&seq, &p).unwrap();
        let ase = lay.windows.iter().find(|w| w.kind == WindowKind::Ase).unwrap();
        let rase = lay.windows.iter().find(|w| w.kind == WindowKind::Rase).unwrap();
        let sr = p.sample_rate;
        let a0 = idx(ase.start, sr);
        let l = idx(ase.length, sr);
        assert_eq!(lay.mirror - 1 - (a0 + l - 1), idx(rase.start, sr));
    }

    #[test]
    fn short_t_a_rejected() {
        let seq = build_rase(5.0, 0.1, 1.0).unwrap();
        assert!(synthesize_trace(&seq, &quiet(), 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let seq = build_rase(20.0, 0.1, 1.0).unwrap();
        let p = SynthParams::default();
        let (a, ia) = synthesize_trace(&seq, &p, 9).unwrap();
        let (b, ib) = synthesize_trace(&seq, &p, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ia, ib);
        assert_ne!(a.samples, synthesize_trace(&seq, &p, 10).unwrap().0.samples);
    }

    #[test]
    fn noiseless_record_is_references_only() {
        let seq = build_rase(20.0, 0.1, 1.0).unwrap();
        let p = SynthParams {
            quantum_noise: false,
            ..quiet()
        };
        let (t, _) = synthesize_trace(&seq, &p, 1).unwrap();
        let ase = t.first_window(WindowKind::Ase).unwrap();
        assert!(t.window(ase).iter().all(|z| z.norm() < 1e-12));
        let r = t.windows_of(WindowKind::Reference).next().unwrap();
        let peak = t.window(r).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((peak - p.reference_amplitude).abs() < 1e-6 * p.reference_amplitude);
    }

    #[test]
    fn probe_echo_appears_mirrored() {
        let seq = build_i4le(20.0, 0.1, 1.0, 1e-3).unwrap();
        let p = SynthParams {
            quantum_noise: false,
            gain_db: 20.0,
            recall_efficiency: 1.0,
            transmission: 1.0,
            write_time: f64::INFINITY,
            ..quiet()
        };
        let (t, _) = synthesize_trace(&seq, &p, 1).unwrap();
        let echo = t.first_window(WindowKind::Echo).unwrap();
        let energy: f64 = t.window(echo).iter().map(|z| z.norm_sqr()).sum();
        assert!(energy > 1.0, "echo energy {energy}");
    }

    #[test]
    fn zero_gain_is_vacuum() {
        let seq = build_rase(20.0, 0.1, 1.0).unwrap();
        let p = SynthParams {
            gain_db: 0.0,
            ..quiet()
        };
        let mut var = [0.0; 3];
        let mut cnt = [0usize; 3];
        for s in 0..40 {
            let (t, _) = synthesize_trace(&seq, &p, s).unwrap();
            for (k, kind) in [WindowKind::Vacuum, WindowKind::Ase, WindowKind::Rase].into_iter().enumerate() {
                let w = t.first_window(kind).unwrap();
                for z in t.window(w) {
                    var[k] += 0.5 * z.norm_sqr();
                    cnt[k] += 1;
                }
            }
        }
        let v: Vec<f64> = var.iter().zip(cnt).map(|(v, c)| v / c as f64).collect();
        assert!((v[1] / v[0] - 1.0).abs() < 0.02, "{v:?}");
        assert!((v[2] / v[0] - 1.0).abs() < 0.02, "{v:?}");
    }
}
