//! Temporal multiplexing: the ASE and RASE windows are cut into short
//! sub-windows, and mode m pairs the m-th ASE sub-window before π1 with the
//! m-th RASE sub-window after π2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::trace::{TimeTrace, WindowKind, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplexSpec {
    /// µs.
    pub window_len: f64,
    /// µs, start-to-start distance of adjacent sub-windows.
    pub spacing: f64,
    /// µs, duration of the ASE (and RASE) window that is subdivided.
    pub gap: f64,
    pub n_modes: usize,
}

impl Default for MultiplexSpec {
    fn default() -> Self {
        MultiplexSpec {
            window_len: 0.5,
            spacing: 2.0,
            gap: 160.0,
            n_modes: 70,
        }
    }
}

/// Sub-window pair of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWindows {
    pub ase: WindowSpec,
    pub rase: WindowSpec,
    /// µs between the ASE sub-window centre and π1.
    pub storage_offset: f64,
}

impl MultiplexSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.window_len > 0.0 && self.spacing > 0.0, "window_len", || {
            "window length and spacing must be > 0".into()
        })?;
        ensure(self.window_len <= self.spacing, "window_len", || {
            format!("{} µs windows overlap at {} µs spacing", self.window_len, self.spacing)
        })?;
        ensure(self.n_modes >= 1, "n_modes", || "need at least one mode".into())?;
        ensure(self.gap >= self.n_modes as f64 * self.spacing, "gap", || {
            format!(
                "{} modes at {} µs spacing need {} µs, gap is {}",
                self.n_modes,
                self.spacing,
                self.n_modes as f64 * self.spacing,
                self.gap
            )
        })
    }

    /// Sub-windows counted outward from π1 (ASE) and π2 (RASE), each centred
    /// in its spacing slot.
    pub fn windows(&self, ase_end: f64, rase_start: f64) -> Result<Vec<ModeWindows>> {
        self.validate()?;
        let pad = (self.spacing - self.window_len) / 2.0;
        Ok((0..self.n_modes)
            .map(|m| {
                let a = ase_end - (m + 1) as f64 * self.spacing + pad;
                let r = rase_start + m as f64 * self.spacing + pad;
                ModeWindows {
                    ase: WindowSpec::new(WindowKind::Ase, a, self.window_len),
                    rase: WindowSpec::new(WindowKind::Rase, r, self.window_len),
                    storage_offset: ase_end - (a + self.window_len / 2.0),
                }
            })
            .collect())
    }

    /// Mode windows for a trace, checked against its annotated ASE/RASE windows.
    pub fn windows_for(&self, trace: &TimeTrace) -> Result<Vec<ModeWindows>> {
        let a = trace.first_window(WindowKind::Ase)?;
        let r = trace.first_window(WindowKind::Rase)?;
        ensure(a.length + 1e-9 >= self.gap && r.length + 1e-9 >= self.gap, "gap", || {
            format!("trace windows ({} / {} µs) are shorter than the {} µs gap", a.length, r.length, self.gap)
        })?;
        self.windows(a.end(), r.start)
    }
}

/// Lag-0 cross-correlation of an ASE window with the mirrored RASE window.
fn cross0(a: &[Complex64], r: &[Complex64]) -> Complex64 {
    let l = a.len().min(r.len());
    (0..l).map(|t| a[t] * r[l - 1 - t]).sum::<Complex64>() / l as f64
}

fn auto0(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Copy, Default)]
struct Moment {
    sum: Complex64,
    sum_sq: f64,
}

impl Moment {
    fn add(&mut self, x: Complex64) {
        self.sum += x;
        self.sum_sq += x.norm_sqr();
    }
    fn merge(&mut self, o: &Moment) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }
    fn mean(&self, n: usize) -> Complex64 {
        self.sum / n as f64
    }
    /// Standard error of the complex mean.
    fn std_err(&self, n: usize) -> f64 {
        let nf = n as f64;
        let var = (self.sum_sq - self.sum.norm_sqr() / nf) / (nf - 1.0);
        (var.max(0.0) / nf).sqrt()
    }
}

/// Streaming per-mode sums; shots can be added in any order and merged.
#[derive(Debug, Clone)]
pub struct MultiplexAccumulator {
    spec: MultiplexSpec,
    auto: Vec<Moment>,
    cross: Vec<Moment>,
    neighbor: Vec<Moment>,
    n: usize,
}

impl MultiplexAccumulator {
    pub fn new(spec: MultiplexSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.n_modes;
        Ok(MultiplexAccumulator {
            spec,
            auto: vec![Moment::default(); k],
            cross: vec![Moment::default(); k],
            neighbor: vec![Moment::default(); k.saturating_sub(1)],
            n: 0,
        })
    }

    /// Add one prepared (baseband, phase-corrected) shot.
    pub fn add(&mut self, trace: &TimeTrace) -> Result<()> {
        let modes = self.spec.windows_for(trace)?;
        let ase: Vec<&[Complex64]> = modes.iter().map(|m| trace.window(&m.ase)).collect();
        let rase: Vec<&[Complex64]> = modes.iter().map(|m| trace.window(&m.rase)).collect();
        for m in 0..modes.len() {
            if ase[m].is_empty() || rase[m].is_empty() {
                return Err(Error::invalid("window_len", "sub-window holds no samples"));
            }
            self.auto[m].add(Complex64::new(auto0(ase[m]), 0.0));
            self.cross[m].add(cross0(ase[m], rase[m]));
            if m + 1 < modes.len() {
                self.neighbor[m].add(cross0(ase[m], rase[m + 1]));
            }
        }
        self.n += 1;
        Ok(())
    }

    pub fn merge(mut self, other: MultiplexAccumulator) -> Result<Self> {
        ensure(self.spec == other.spec, "spec", || "cannot merge different multiplex specs".into())?;
        for (a, b) in self.auto.iter_mut().zip(&other.auto) {
            a.merge(b);
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            a.merge(b);
        }
        for (a, b) in self.neighbor.iter_mut().zip(&other.neighbor) {
            a.merge(b);
        }
        self.n += other.n;
        Ok(self)
    }

    pub fn finish(&self) -> Result<MultiplexResult> {
        let n = self.n;
        ensure(n >= 2, "shots", || format!("need at least 2 shots, got {n}"))?;
        let zero = self.spec.windows(0.0, 0.0)?;
        let mut modes: Vec<ModeStats> = (0..self.spec.n_modes)
            .map(|m| {
                let c = self.cross[m].mean(n);
                let nb = self.neighbor.get(m);
                let nb_mean = nb.map(|x| x.mean(n));
                let nb_err = nb.map(|x| x.std_err(n));
                ModeStats {
                    index: m,
                    storage_offset: zero[m].storage_offset,
                    auto_a: self.auto[m].mean(n).re,
                    auto_a_err: self.auto[m].std_err(n),
                    cross: c.norm(),
                    cross_err: self.cross[m].std_err(n),
                    relative: 0.0,
                    neighbor: nb_mean.map(|z| z.norm()),
                    neighbor_err: nb_err,
                    neighbor_z: nb_mean.zip(nb_err).map(|(z, e)| if e > 0.0 { z.norm() / e } else { 0.0 }),
                }
            })
            .collect();
        let r0 = modes[0].cross / modes[0].auto_a;
        for m in &mut modes {
            m.relative = if r0 > 0.0 { m.cross / m.auto_a / r0 } else { 0.0 };
        }
        let threshold = (-1.0f64).exp();
        let tbp = modes.iter().filter(|m| m.relative >= threshold).count();
        Ok(MultiplexResult {
            spec: self.spec,
            n_defined: modes.len(),
            tbp,
            threshold,
            n_shots: n,
            modes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub index: usize,
    pub storage_offset: f64,
    pub auto_a: f64,
    pub auto_a_err: f64,
    /// |⟨C_X(0)⟩| of ASE window m with RASE window m.
    pub cross: f64,
    pub cross_err: f64,
    /// Cross over auto, relative to mode 0.
    pub relative: f64,
    /// |⟨C_X(0)⟩| of ASE window m with RASE window m+1.
    pub neighbor: Option<f64>,
    pub neighbor_err: Option<f64>,
    /// Neighbor magnitude in units of its standard error.
    pub neighbor_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplexResult {
    pub spec: MultiplexSpec,
    pub n_defined: usize,
    /// Number of modes whose relative cross-correlation is at least 1/e.
    pub tbp: usize,
    pub threshold: f64,
    pub n_shots: usize,
    pub modes: Vec<ModeStats>,
}

pub fn multiplex_analysis(shots: &[TimeTrace], spec: MultiplexSpec) -> Result<MultiplexResult> {
    let mut acc = MultiplexAccumulator::new(spec)?;
    for s in shots {
        acc.add(s)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventy_modes_fit_the_gap() {
        let s = MultiplexSpec::default();
        let w = s.windows(200.0, 300.0).unwrap();
        assert_eq!(w.len(), 70);
        assert!((w[0].ase.end() - 199.25).abs() < 1e-12);
        assert!((w[0].rase.start - 300.75).abs() < 1e-12);
        assert!((w[0].storage_offset - 1.0).abs() < 1e-12);
        assert!(w[69].ase.start >= 200.0 - 160.0);
        for p in w.windows(2) {
            assert!(p[1].ase.end() <= p[0].ase.start);
            assert!(p[0].rase.end() <= p[1].rase.start);
        }
    }

    #[test]
    fn bad_specs_rejected() {
        let base = MultiplexSpec::default();
        for s in [
            MultiplexSpec { gap: 100.0, ..base },
            MultiplexSpec { window_len: 2.5, ..base },
            MultiplexSpec { n_modes: 0, ..base },
        ] {
            assert!(s.validate().is_err(), "{s:?}");
        }
    }

    fn mirrored_trace(decay: impl Fn(f64) -> f64, seed: u64) -> TimeTrace {
        use rand_distr::{Distribution, StandardNormal};
        let sr = 20.0;
        let spec = MultiplexSpec { gap: 20.0, n_modes: 10, ..Default::default() };
        let mut rng = crate::seed::sub_rng(seed, 0);
        let n = 1000;
        let (pi1, pi2) = (450usize, 470usize);
        let mut s = vec![Complex64::default(); n];
        for i in pi1 - 400..pi1 {
            let z = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            s[i] = z;
            let tau = (pi1 - i) as f64 / sr;
            s[pi2 + pi1 - 1 - i] = z.conj() * decay(tau);
        }
        let w = vec![
            WindowSpec::new(WindowKind::Ase, pi1 as f64 / sr - spec.gap, spec.gap),
            WindowSpec::new(WindowKind::Rase, pi2 as f64 / sr, spec.gap),
        ];
        TimeTrace::new(sr, s, 0.0, w, seed).unwrap()
    }

    #[test]
    fn white_noise_modes() {
        let spec = MultiplexSpec { gap: 20.0, n_modes: 10, ..Default::default() };
        let shots: Vec<_> = (0..200).map(|k| mirrored_trace(|t| (-t / 9.0).exp(), k)).collect();
        let r = multiplex_analysis(&shots, spec).unwrap();
        assert_eq!(r.n_defined, 10);
        // relative amplitude exp(-2m/9) stays above 1/e for m <= 4
        assert_eq!(r.tbp, 5);
        for m in &r.modes[..9] {
            assert!(m.neighbor_z.unwrap() < 5.0, "{m:?}");
        }
        let mut a = MultiplexAccumulator::new(spec).unwrap();
        let mut b = MultiplexAccumulator::new(spec).unwrap();
        for (i, s) in shots.iter().enumerate() {
            if i % 2 == 0 { a.add(s).unwrap() } else { b.add(s).unwrap() }
        }
        let merged = a.merge(b).unwrap().finish().unwrap();
        assert_eq!(merged.tbp, r.tbp);
        assert!((merged.modes[3].cross - r.modes[3].cross).abs() < 1e-12);
    }

    #[test]
    fn short_trace_window_rejected() {
        let spec = MultiplexSpec { gap: 30.0, n_modes: 10, ..Default::default() };
        let t = mirrored_trace(|_| 1.0, 0);
        assert!(MultiplexAccumulator::new(spec).unwrap().add(&t).is_err());
    }
}
