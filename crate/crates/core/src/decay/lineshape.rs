//! Spectral densities from magnetic-field gradients and their echo envelopes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Axial field B(x) = a x² + b x + c across the crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldProfile {
    /// T/mm².
    pub a: f64,
    /// T/mm.
    pub b: f64,
    /// T.
    pub c: f64,
    /// mm.
    pub crystal_extent: [f64; 2],
    /// Transition field sensitivity, kHz/mT.
    pub sensitivity_g: f64,
}

impl FieldProfile {
    pub fn from_json(s: &str) -> Result<Self> {
        let p: FieldProfile =
            serde_json::from_str(s).map_err(|e| Error::parse("field profile", e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, x1] = self.crystal_extent;
        ensure(x0.is_finite() && x1.is_finite() && x1 > x0, "crystal_extent", || {
            format!("[{x0}, {x1}] must be finite with x1 > x0")
        })?;
        ensure(
            self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.sensitivity_g.is_finite(),
            "field profile",
            || "coefficients must be finite".into(),
        )
    }

    /// Hz per (T) of field change.
    fn hz_per_tesla(&self) -> f64 {
        self.sensitivity_g * 1e6
    }

    /// Move the crystal by `dx` mm along the axis.
    pub fn shifted(&self, dx: f64) -> Self {
        FieldProfile {
            crystal_extent: [self.crystal_extent[0] + dx, self.crystal_extent[1] + dx],
            ..*self
        }
    }

    /// Frequency shift relative to c at position `x`, Hz.
    fn shift(&self, x: f64) -> f64 {
        self.hz_per_tesla() * (self.a * x * x + self.b * x)
    }

    /// Extremes of the shift over the crystal.
    fn shift_range(&self) -> (f64, f64) {
        let [x0, x1] = self.crystal_extent;
        let mut pts = vec![self.shift(x0), self.shift(x1)];
        if self.a != 0.0 {
            let xv = -self.b / (2.0 * self.a);
            if xv > x0 && xv < x1 {
                pts.push(self.shift(xv));
            }
        }
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Largest detuning between any two ions in the crystal, Hz.
    pub fn max_detuning(&self) -> f64 {
        let (lo, hi) = self.shift_range();
        hi - lo
    }

    /// Fraction of the crystal whose shift is at most `level` Hz.
    fn cumulative(&self, level: f64) -> f64 {
        let [x0, x1] = self.crystal_extent;
        let len = x1 - x0;
        let k = self.hz_per_tesla();
        let (qa, qb) = (k * self.a, k * self.b);
        let clip = |lo: f64, hi: f64| (hi.min(x1) - lo.max(x0)).max(0.0);
        if qa == 0.0 {
            if qb == 0.0 {
                return if level >= 0.0 { 1.0 } else { 0.0 };
            }
            let r = level / qb;
            let m = if qb > 0.0 { clip(f64::NEG_INFINITY, r) } else { clip(r, f64::INFINITY) };
            return m / len;
        }
        // Roots of qa x² + qb x − level = 0.
        let disc = qb * qb + 4.0 * qa * level;
        if disc < 0.0 {
            // Never reaches the level: convex lies above, concave below.
            return if qa > 0.0 { 0.0 } else { 1.0 };
        }
        let sq = disc.sqrt();
        let sgn = if qb >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (qb + sgn * sq);
        let (mut r1, mut r2) = if q != 0.0 { (q / qa, -level / q) } else { (0.0, 0.0) };
        if r1 > r2 {
            std::mem::swap(&mut r1, &mut r2);
        }
        let m = if qa > 0.0 {
            clip(r1, r2)
        } else {
            clip(f64::NEG_INFINITY, r1) + clip(r2, f64::INFINITY)
        };
        (m / len).clamp(0.0, 1.0)
    }
}

/// The sub-millimetre-offset crystal in the 6 T solenoid: a 3 mm crystal
/// spanning −1.3 to 1.7 mm about the field maximum with a ~1 mT sag. The
/// storage-level frequency falls with field, so the lineshape starts at the
/// centre and the short side of the crystal leaves a step at 175 Hz.
pub fn near_center_profile() -> FieldProfile {
    FieldProfile {
        a: -3.46e-4,
        b: 0.0,
        c: 6.0,
        crystal_extent: [-1.3, 1.7],
        sensitivity_g: -0.3,
    }
}

/// Sampled spectral density; `detunings` in Hz, strictly increasing.
///
/// With `bin_width` set, each point is the centre of a histogram bin of
/// uniform density; otherwise points are samples of a smooth density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineshape {
    pub detunings: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = x[i + 1] - x[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

impl Lineshape {
    /// Normalise `density` to unit trapezoid area.
    pub fn new(detunings: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        ensure(detunings.len() == density.len() && detunings.len() >= 2, "lineshape", || {
            "need matching grids with at least 2 points".into()
        })?;
        ensure(detunings.windows(2).all(|w| w[1] > w[0]), "lineshape.detunings", || {
            "must be strictly increasing".into()
        })?;
        ensure(density.iter().all(|d| d.is_finite() && *d >= 0.0), "lineshape.density", || {
            "must be finite and non-negative".into()
        })?;
        let area: f64 = trapezoid_weights(&detunings).iter().zip(&density).map(|(w, d)| w * d).sum();
        ensure(area > 0.0, "lineshape.density", || "has zero area".into())?;
        Ok(Lineshape {
            density: density.iter().map(|d| d / area).collect(),
            detunings,
            bin_width: None,
        })
    }

    /// All ions at one frequency.
    pub fn delta() -> Self {
        Lineshape {
            detunings: vec![-1.0, 0.0, 1.0],
            density: vec![0.0, 1.0, 0.0],
            bin_width: None,
        }
    }

    /// Sample a density function on `n` uniform points in [lo, hi] Hz.
    pub fn from_fn(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let h = (hi - lo) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let d = x.iter().map(|&v| f(v)).collect();
        Lineshape::new(x, d)
    }

    pub fn area(&self) -> f64 {
        trapezoid_weights(&self.detunings).iter().zip(&self.density).map(|(w, d)| w * d).sum()
    }

    /// Detuning span of the occupied bins, Hz.
    pub fn support_width(&self) -> f64 {
        let occupied: Vec<f64> = self
            .detunings
            .iter()
            .zip(&self.density)
            .filter(|(_, d)| **d > 0.0)
            .map(|(f, _)| *f)
            .collect();
        match (occupied.first(), occupied.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.density.iter().filter(|d| **d > 0.0).count() <= 1
    }
}

/// Ion density over detuning for a crystal in a parabolic field.
///
/// The crystal is cut into frequency bins of width max(spread/n_slices, 1 Hz)
/// and each bin receives the exact fraction of the crystal whose detuning
/// falls inside it, so dx/df is never evaluated at the vertex. The grid is
/// padded with an empty bin on each side.
pub fn gradient_lineshape(profile: &FieldProfile, n_slices: usize) -> Result<Lineshape> {
    profile.validate()?;
    ensure(n_slices >= 16, "n_slices", || format!("{n_slices} < 16"))?;
    let (lo, hi) = profile.shift_range();
    let spread = hi - lo;
    let width = (spread / n_slices as f64).max(1.0);
    let bins = ((spread / width - 1e-9).ceil() as usize).max(1);
    let mut det = Vec::with_capacity(bins + 2);
    let mut dens = Vec::with_capacity(bins + 2);
    det.push(-width / 2.0);
    dens.push(0.0);
    let mut prev = 0.0;
    for k in 0..bins {
        let edge = (k + 1) as f64 * width;
        let cum = if k + 1 == bins { 1.0 } else { profile.cumulative(lo + edge) };
        det.push((k as f64 + 0.5) * width);
        dens.push((cum - prev).max(0.0) / width);
        prev = cum;
    }
    det.push((bins as f64 + 0.5) * width);
    dens.push(0.0);
    let mut ls = Lineshape::new(det, dens)?;
    if bins > 1 {
        ls.bin_width = Some(width);
    }
    Ok(ls)
}

/// Echo envelope |∫ ρ(f) e^{−i2πft} df| at each time (µs).
pub fn envelope_from_lineshape(ls: &Lineshape, times: &[f64]) -> Vec<f64> {
    let w = trapezoid_weights(&ls.detunings);
    let terms: Vec<(f64, f64)> = ls
        .detunings
        .iter()
        .zip(w.iter().zip(&ls.density))
        .filter(|(_, (_, d))| **d != 0.0)
        .map(|(f, (w, d))| (*f, w * d))
        .collect();
    let norm: f64 = terms.iter().map(|t| t.1).sum();
    times
        .iter()
        .map(|&t| {
            let (mut re, mut im) = (0.0, 0.0);
            for &(f, m) in &terms {
                let (s, c) = (2.0 * PI * f * t * 1e-6).sin_cos();
                re += m * c;
                im -= m * s;
            }
            let slab = match ls.bin_width {
                Some(w) if t != 0.0 => {
                    let x = PI * w * t * 1e-6;
                    (x.sin() / x).abs()
                }
                _ => 1.0,
            };
            re.hypot(im) / norm * slab
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinc_abs(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            (x.sin() / x).abs()
        }
    }

    #[test]
    fn linear_gradient_is_top_hat_with_sinc_envelope() {
        let p = FieldProfile {
            a: 0.0,
            b: 1e-4,
            c: 6.0,
            crystal_extent: [0.0, 3.0],
            sensitivity_g: 1.0,
        };
        let ls = gradient_lineshape(&p, 1024).unwrap();
        let w = p.max_detuning();
        assert!((w - 300.0).abs() < 1e-9);
        let inner = &ls.density[1..ls.density.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!(inner.iter().all(|d| (d / mean - 1.0).abs() < 1e-9));
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 5.0).collect();
        for (t, e) in times.iter().zip(envelope_from_lineshape(&ls, &times)) {
            let want = sinc_abs(PI * w * t * 1e-6);
            assert!((e - want).abs() < 1e-6, "t={t}: {e} vs {want}");
        }
    }

    #[test]
    fn constant_field_is_single_bin() {
        let p = FieldProfile {
            a: 0.0,
            b: 0.0,
            c: 6.0,
            crystal_extent: [0.0, 3.0],
            sensitivity_g: 1.0,
        };
        let ls = gradient_lineshape(&p, 64).unwrap();
        assert!(ls.is_trivial());
        let env = envelope_from_lineshape(&ls, &[0.0, 100.0, 1e4]);
        assert!(env.iter().all(|e| (e - 1.0).abs() < 1e-15));
    }

    #[test]
    fn near_center_profile_scale() {
        let p = near_center_profile();
        let ls = gradient_lineshape(&p, 1024).unwrap();
        assert!(p.max_detuning() <= 300.0 + 1e-6, "{}", p.max_detuning());
        assert!(p.max_detuning() > 290.0);
        assert!((ls.area() - 1.0).abs() < 1e-9);
        // Off-centre crystal: density drops where only one side contributes.
        let step_at: f64 = 3.46e-4 * 0.3e6 * 1.3 * 1.3;
        assert!((step_at - 175.4).abs() < 0.1);
        let below = ls.detunings.iter().position(|f| *f > step_at - 20.0).unwrap();
        let above = ls.detunings.iter().position(|f| *f > step_at + 20.0).unwrap();
        assert!(ls.density[below] > 1.5 * ls.density[above]);
    }

    #[test]
    fn fourier_pairs() {
        let g = 2000.0; // Hz FWHM
        let s = g / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let gauss = Lineshape::from_fn(|f| (-(f * f) / (2.0 * s * s)).exp(), -12.0 * s, 12.0 * s, 4001).unwrap();
        let times = [0.0, 50.0, 150.0, 300.0, 600.0];
        for (t, e) in times.iter().zip(envelope_from_lineshape(&gauss, &times)) {
            let want = (-(PI * g * t * 1e-6).powi(2) / (4.0 * 2f64.ln())).exp();
            assert!((e - want).abs() < 1e-6, "{t}: {e} {want}");
        }
        // Lorentzian truncated at ±10⁵ widths: tail mass ~3e-6 bounds the error.
        let l = 1000.0;
        let half = 1e5 * l;
        let lor = Lineshape::from_fn(|f| 1.0 / (f * f + l * l / 4.0), -half, half, 4_000_001).unwrap();
        for (t, e) in times.iter().zip(envelope_from_lineshape(&lor, &times)) {
            let want = (-PI * l * t * 1e-6).exp();
            assert!((e - want).abs() < 1e-5, "{t}: {e} {want}");
        }
    }

    #[test]
    fn area_stable_under_refinement() {
        let p = near_center_profile();
        let coarse = gradient_lineshape(&p, 256).unwrap();
        let fine = gradient_lineshape(&p, 2048).unwrap();
        assert!((coarse.area() - fine.area()).abs() < 1e-3);
        let t = [160.0];
        let (a, b) = (envelope_from_lineshape(&coarse, &t)[0], envelope_from_lineshape(&fine, &t)[0]);
        assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn envelope_bounded_by_one() {
        let ls = gradient_lineshape(&near_center_profile().shifted(3.0), 512).unwrap();
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 3.0).collect();
        let env = envelope_from_lineshape(&ls, &times);
        assert_eq!(env[0], 1.0);
        assert!(env.iter().all(|e| *e <= 1.0 + 1e-12));
    }
}
