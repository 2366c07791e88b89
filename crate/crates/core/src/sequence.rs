//! Protocol pulse sequences and spectral capacity estimates.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scheme::{LevelScheme, TransitionLabel};

/// Largest input area accepted as a weak probe, in units of π.
pub const WEAK_PROBE_MAX_AREA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceKind {
    #[serde(rename = "RASE")]
    Rase,
    #[serde(rename = "I4LE")]
    I4le,
    #[serde(rename = "NLPE")]
    Nlpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    /// The input probe is the event driven on the ASE transition.
    pub transition: TransitionLabel,
    pub start: f64,
    pub duration: f64,
    /// Fraction of a π rotation.
    pub area: f64,
    pub phase: f64,
}

impl PulseEvent {
    fn new(transition: TransitionLabel, start: f64, duration: f64, area: f64) -> Self {
        PulseEvent {
            transition,
            start,
            duration,
            area,
            phase: 0.0,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn is_input(&self) -> bool {
        self.transition == TransitionLabel::Ase
    }
}

/// Timing knobs shared by the builders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseOptions {
    /// Duration of square π pulses, µs.
    pub pulse_duration: f64,
    pub input_duration: f64,
    /// Gap between πi and the input pulse, µs.
    pub input_guard: f64,
    /// Smallest accepted t_a. Note that t_a must exceed the analysis window
    /// for an ASE window to be visible between πi and π1.
    pub min_t_a: f64,
    pub allow_strong_input: bool,
}

impl Default for PulseOptions {
    fn default() -> Self {
        PulseOptions {
            pulse_duration: 1.0,
            input_duration: 1.0,
            input_guard: 0.5,
            min_t_a: 1.0,
            allow_strong_input: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub events: Vec<PulseEvent>,
    pub t_a: f64,
    pub t_b: f64,
    pub kind: SequenceKind,
}

fn check_delays(t_a: f64, t_b: f64, opts: &PulseOptions) -> Result<()> {
    ensure(t_a.is_finite() && t_a > 0.0, "t_a", || format!("{t_a} must be > 0"))?;
    ensure(t_a >= opts.min_t_a, "t_a", || {
        format!("{t_a} us is below the configured minimum {} us", opts.min_t_a)
    })?;
    ensure(t_b.is_finite() && t_b >= 0.0, "t_b", || format!("{t_b} must be >= 0"))?;
    ensure(opts.pulse_duration > 0.0 && opts.input_duration > 0.0, "pulse_duration", || {
        "pulse durations must be > 0".into()
    })?;
    ensure(opts.input_guard >= 0.0, "input_guard", || "must be >= 0".into())
}

fn check_area(name: &str, a: f64) -> Result<()> {
    ensure(a > 0.0 && a <= 1.0, name, || format!("{a} is outside (0, 1]"))
}

pub fn build_rase(t_a: f64, t_b: f64, inversion_area: f64) -> Result<PulseSequence> {
    build_rase_with(t_a, t_b, inversion_area, &PulseOptions::default())
}

pub fn build_rase_with(t_a: f64, t_b: f64, inversion_area: f64, opts: &PulseOptions) -> Result<PulseSequence> {
    check_delays(t_a, t_b, opts)?;
    check_area("inversion_area", inversion_area)?;
    let d = opts.pulse_duration;
    let pi_i = PulseEvent::new(TransitionLabel::PiI, 0.0, d, inversion_area);
    let pi1 = PulseEvent::new(TransitionLabel::Pi1, pi_i.end() + t_a, d, 1.0);
    let pi2 = PulseEvent::new(TransitionLabel::Pi2, pi1.end() + t_b, d, 1.0);
    Ok(PulseSequence {
        events: vec![pi_i, pi1, pi2],
        t_a,
        t_b,
        kind: SequenceKind::Rase,
    })
}

pub fn build_i4le(t_a: f64, t_b: f64, inversion_area: f64, input_area: f64) -> Result<PulseSequence> {
    build_i4le_with(t_a, t_b, inversion_area, input_area, &PulseOptions::default())
}

pub fn build_i4le_with(
    t_a: f64,
    t_b: f64,
    inversion_area: f64,
    input_area: f64,
    opts: &PulseOptions,
) -> Result<PulseSequence> {
    check_delays(t_a, t_b, opts)?;
    check_area("inversion_area", inversion_area)?;
    check_area("input_area", input_area)?;
    if input_area > WEAK_PROBE_MAX_AREA && !opts.allow_strong_input {
        return Err(Error::invalid(
            "input_area",
            format!("{input_area} pi over-drives the gain medium (weak-probe limit {WEAK_PROBE_MAX_AREA})"),
        ));
    }
    let d = opts.pulse_duration;
    let pi_i = PulseEvent::new(TransitionLabel::PiI, 0.0, d, inversion_area);
    let input = PulseEvent::new(TransitionLabel::Ase, pi_i.end() + opts.input_guard, opts.input_duration, input_area);
    let pi1 = PulseEvent::new(TransitionLabel::Pi1, input.end() + t_a, d, 1.0);
    let pi2 = PulseEvent::new(TransitionLabel::Pi2, pi1.end() + t_b, d, 1.0);
    Ok(PulseSequence {
        events: vec![pi_i, input, pi1, pi2],
        t_a,
        t_b,
        kind: SequenceKind::I4le,
    })
}

/// Convert to the read-write variant: drop πi, keep or add the input, and
/// rephase with (π1, π2, π2, π1). The second π2 follows the first directly
/// and the final π1 comes t_b later.
pub fn to_nlpe(seq: &PulseSequence) -> PulseSequence {
    if seq.kind == SequenceKind::Nlpe {
        return seq.clone();
    }
    let d = seq.events.iter().find(|e| !e.is_input()).map_or(1.0, |e| e.duration);
    let input = seq.input().copied().unwrap_or(PulseEvent::new(
        TransitionLabel::Ase,
        0.0,
        1.0,
        WEAK_PROBE_MAX_AREA,
    ));
    let input = PulseEvent { start: 0.0, ..input };
    let pi1 = PulseEvent::new(TransitionLabel::Pi1, input.end() + seq.t_a, d, 1.0);
    let pi2 = PulseEvent::new(TransitionLabel::Pi2, pi1.end() + seq.t_b, d, 1.0);
    let pi2b = PulseEvent::new(TransitionLabel::Pi2, pi2.end(), d, 1.0);
    let pi1b = PulseEvent::new(TransitionLabel::Pi1, pi2b.end() + seq.t_b, d, 1.0);
    PulseSequence {
        events: vec![input, pi1, pi2, pi2b, pi1b],
        t_a: seq.t_a,
        t_b: seq.t_b,
        kind: SequenceKind::Nlpe,
    }
}

impl PulseSequence {
    fn find(&self, label: TransitionLabel) -> Option<&PulseEvent> {
        self.events.iter().find(|e| e.transition == label)
    }

    pub fn input(&self) -> Option<&PulseEvent> {
        self.find(TransitionLabel::Ase)
    }

    pub fn pi_i(&self) -> Option<&PulseEvent> {
        self.find(TransitionLabel::PiI)
    }

    pub fn pi1(&self) -> &PulseEvent {
        self.find(TransitionLabel::Pi1).expect("every sequence has a π1")
    }

    /// The last π2, i.e. the one that starts re-emission in RASE and I4LE.
    pub fn pi2(&self) -> &PulseEvent {
        self.events
            .iter()
            .filter(|e| e.transition == TransitionLabel::Pi2)
            .next_back()
            .expect("every sequence has a π2")
    }

    pub fn end(&self) -> f64 {
        self.events.iter().map(PulseEvent::end).fold(0.0, f64::max)
    }

    /// Nominal input-to-echo delay, excluding pulse durations.
    pub fn echo_delay(&self) -> f64 {
        match self.kind {
            SequenceKind::Nlpe => 2.0 * self.t_a + 2.0 * self.t_b,
            _ => 2.0 * self.t_a + self.t_b,
        }
    }

    /// Start of the echo in the record.
    pub fn echo_time(&self) -> Option<f64> {
        let input = self.input()?;
        let last = self.events.last()?;
        Some(last.end() + (self.pi1().start - input.end()))
    }

    /// Interval in which ASE is emitted (πi to π1).
    pub fn ase_interval(&self) -> Option<(f64, f64)> {
        Some((self.pi_i()?.end(), self.pi1().start))
    }

    /// Interval in which RASE is emitted, mirroring the ASE interval.
    pub fn rase_interval(&self) -> Option<(f64, f64)> {
        let (a, b) = self.ase_interval()?;
        Some((self.mirror_time(b), self.mirror_time(a)))
    }

    /// Time at which light emitted at `t` before π1 is re-emitted after π2.
    pub fn mirror_time(&self, t: f64) -> f64 {
        self.pi2().end() + (self.pi1().start - t)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.t_a > 0.0, "t_a", || "must be > 0".into())?;
        ensure(self.t_b >= 0.0, "t_b", || "must be >= 0".into())?;
        for w in self.events.windows(2) {
            ensure(w[0].end() <= w[1].start + 1e-9, "events", || {
                format!("{:?} overlaps {:?}", w[0].transition, w[1].transition)
            })?;
        }
        for e in &self.events {
            ensure(e.duration > 0.0, "events.duration", || "must be > 0".into())?;
            check_area("events.area", e.area)?;
        }
        let labels: Vec<TransitionLabel> = self.events.iter().map(|e| e.transition).collect();
        use TransitionLabel::*;
        let expected: &[TransitionLabel] = match self.kind {
            SequenceKind::Rase => &[PiI, Pi1, Pi2],
            SequenceKind::I4le => &[PiI, Ase, Pi1, Pi2],
            SequenceKind::Nlpe => &[Ase, Pi1, Pi2, Pi2, Pi1],
        };
        ensure(labels == expected, "events", || {
            format!("{:?} sequence has order {labels:?}, expected {expected:?}", self.kind)
        })?;
        let tol = 1e-9 * (1.0 + self.end());
        let pi1 = self.events.iter().position(|e| e.transition == Pi1).unwrap();
        let gap = self.events[pi1 + 1].start - self.events[pi1].end();
        ensure((gap - self.t_b).abs() <= tol, "t_b", || {
            format!("π1→π2 gap is {gap}, expected {}", self.t_b)
        })?;
        if let Some(input) = self.input() {
            let gap = self.pi1().start - input.end();
            ensure((gap - self.t_a).abs() <= tol, "t_a", || {
                format!("input→π1 gap is {gap}, expected {}", self.t_a)
            })?;
        } else if let Some(pi_i) = self.pi_i() {
            let gap = self.pi1().start - pi_i.end();
            ensure((gap - self.t_a).abs() <= tol, "t_a", || {
                format!("πi→π1 gap is {gap}, expected {}", self.t_a)
            })?;
        }
        Ok(())
    }

    /// One-line ASCII sketch of the events, `width` characters wide.
    pub fn timeline(&self, width: usize) -> String {
        let width = width.max(10);
        let span = self.end().max(1e-12);
        let mut line = vec!['-'; width];
        for e in &self.events {
            let a = ((e.start / span) * (width - 1) as f64).round() as usize;
            let b = ((e.end() / span) * (width - 1) as f64).round() as usize;
            let c = match e.transition {
                TransitionLabel::PiI => 'i',
                TransitionLabel::Ase => 'o',
                TransitionLabel::Pi1 => '1',
                TransitionLabel::Pi2 => '2',
                TransitionLabel::Rase => 'r',
            };
            for slot in &mut line[a.min(width - 1)..=b.min(width - 1)] {
                *slot = c;
            }
        }
        let mut s: String = line.into_iter().collect();
        s.push_str(&format!("  ({span:.3} us)"));
        s
    }
}

/// Narrowest spacing between transitions, capped by the inhomogeneous linewidth.
pub fn memory_bandwidth(scheme: &LevelScheme) -> f64 {
    let t = &scheme.transitions;
    let mut min = f64::INFINITY;
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            min = min.min((t[i].freq_offset - t[j].freq_offset).abs());
        }
    }
    min.min(scheme.optical_inhomogeneous_linewidth)
}

/// How a bandwidth and write-time are turned into a mode count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityStrategy {
    /// One complex mode per 2/B of write-time: floor(B·T/2).
    #[default]
    NyquistPairs,
}

pub fn spectro_temporal_capacity(bandwidth: f64, write_time: f64) -> Result<u64> {
    capacity_with(CapacityStrategy::NyquistPairs, bandwidth, write_time)
}

pub fn capacity_with(strategy: CapacityStrategy, bandwidth: f64, write_time: f64) -> Result<u64> {
    ensure(bandwidth.is_finite() && bandwidth > 0.0, "bandwidth", || {
        format!("{bandwidth} must be > 0")
    })?;
    ensure(write_time.is_finite() && write_time > 0.0, "write_time", || {
        format!("{write_time} must be > 0")
    })?;
    match strategy {
        CapacityStrategy::NyquistPairs => Ok((bandwidth * write_time / 2.0).floor() as u64),
    }
}
