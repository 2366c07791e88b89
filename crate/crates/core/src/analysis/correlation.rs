//! Shot-averaged window correlations.
//!
//! The RASE is the time-reversed partner of the ASE, so the cross-correlation
//! reads the RASE window backwards: C_X(τ) = Σ_t A(t)·R(L−1−t+τ). Lag zero
//! then pairs every ASE sample with the RASE sample it was recalled into.
//! The ASE autocorrelation is the usual C_A(τ) = Σ_t A(t)·Ā(t−τ).
//! Both are normalised by the number of overlapping samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decay::voigt_profile;
use crate::error::{ensure, Error, Result};
use crate::optim::nelder_mead;
use crate::spectral::cross_correlate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    AutoA,
    AutoR,
    Cross,
    NeighborCross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub kind: CorrelationKind,
    /// µs.
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Standard error of each value over shots.
    pub std_err: Vec<f64>,
    /// Full width at half maximum of |values|, µs.
    pub fwhm: Option<f64>,
    pub n_shots: usize,
}

impl CorrelationResult {
    fn zero_index(&self) -> usize {
        self.lags.len() / 2
    }

    pub fn at_zero(&self) -> Complex64 {
        self.values[self.zero_index()]
    }

    pub fn std_err_at_zero(&self) -> f64 {
        self.std_err[self.zero_index()]
    }
}

/// Associative accumulator of per-shot correlations.
#[derive(Debug, Clone)]
pub struct CorrAccumulator {
    kind: CorrelationKind,
    sample_rate: f64,
    max_lag: usize,
    len: Option<usize>,
    sum: Vec<Complex64>,
    sum_sq: Vec<f64>,
    n: usize,
}

fn lag_values(x: &[Complex64], y: &[Complex64], max_lag: usize) -> Vec<Complex64> {
    let l = x.len();
    let full = cross_correlate(x, y);
    (0..=2 * max_lag)
        .map(|k| {
            let m = k as isize - max_lag as isize;
            full[(m + l as isize - 1) as usize] / (l - m.unsigned_abs()) as f64
        })
        .collect()
}

impl CorrAccumulator {
    /// `max_lag` in µs; clipped to the window length once the first shot arrives.
    pub fn new(kind: CorrelationKind, sample_rate: f64, max_lag: f64) -> Self {
        CorrAccumulator {
            kind,
            sample_rate,
            max_lag: (max_lag * sample_rate).round().max(0.0) as usize,
            len: None,
            sum: Vec::new(),
            sum_sq: Vec::new(),
            n: 0,
        }
    }

    fn check_len(&mut self, l: usize) -> Result<()> {
        ensure(l >= 2, "window", || "correlation windows need at least 2 samples".into())?;
        match self.len {
            None => {
                self.len = Some(l);
                self.max_lag = self.max_lag.min(l - 1);
                self.sum = vec![Complex64::default(); 2 * self.max_lag + 1];
                self.sum_sq = vec![0.0; 2 * self.max_lag + 1];
                Ok(())
            }
            Some(k) if k == l => Ok(()),
            Some(k) => Err(Error::invalid("window", format!("window length {l} differs from {k}"))),
        }
    }

    fn push(&mut self, v: Vec<Complex64>) {
        for ((s, q), z) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(v) {
            *s += z;
            *q += z.norm_sqr();
        }
        self.n += 1;
    }

    /// Add one shot's autocorrelation of `a`.
    pub fn add_auto(&mut self, a: &[Complex64]) -> Result<()> {
        self.check_len(a.len())?;
        let conj: Vec<Complex64> = a.iter().map(|z| z.conj()).collect();
        let v = lag_values(a, &conj, self.max_lag);
        self.push(v);
        Ok(())
    }

    /// Add one shot's cross-correlation of ASE window `a` with RASE window `r`.
    pub fn add_cross(&mut self, a: &[Complex64], r: &[Complex64]) -> Result<()> {
        ensure(a.len() == r.len(), "window", || {
            format!("ASE and RASE windows differ in length ({} vs {})", a.len(), r.len())
        })?;
        self.check_len(a.len())?;
        let rev: Vec<Complex64> = r.iter().rev().copied().collect();
        let v = lag_values(a, &rev, self.max_lag);
        self.push(v);
        Ok(())
    }

    pub fn merge(mut self, other: CorrAccumulator) -> Result<Self> {
        if other.n == 0 {
            return Ok(self);
        }
        if self.n == 0 {
            return Ok(other);
        }
        ensure(self.len == other.len && self.kind == other.kind, "merge", || {
            "accumulators differ in kind or window length".into()
        })?;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.n += other.n;
        Ok(self)
    }

    pub fn finish(self) -> Result<CorrelationResult> {
        ensure(self.n >= 2, "shots", || {
            format!("ensemble statistics need at least 2 shots, got {}", self.n)
        })?;
        let n = self.n as f64;
        let values: Vec<Complex64> = self.sum.iter().map(|s| s / n).collect();
        let std_err = values
            .iter()
            .zip(&self.sum_sq)
            .map(|(m, q)| ((q / n - m.norm_sqr()).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect();
        let k = self.max_lag as isize;
        let lags: Vec<f64> = (-k..=k).map(|m| m as f64 / self.sample_rate).collect();
        let fwhm = fwhm(&lags, &values);
        Ok(CorrelationResult {
            kind: self.kind,
            lags,
            values,
            std_err,
            fwhm,
            n_shots: self.n,
        })
    }
}

/// Ensemble autocorrelation of equal-length windows, lags up to `max_lag` µs.
pub fn autocorrelate<W: AsRef<[Complex64]>>(
    windows: &[W],
    sample_rate: f64,
    max_lag: f64,
    kind: CorrelationKind,
) -> Result<CorrelationResult> {
    let mut acc = CorrAccumulator::new(kind, sample_rate, max_lag);
    for w in windows {
        acc.add_auto(w.as_ref())?;
    }
    acc.finish()
}

/// Ensemble cross-correlation of paired ASE and RASE windows.
pub fn correlate<W: AsRef<[Complex64]>>(
    ase: &[W],
    rase: &[W],
    sample_rate: f64,
    max_lag: f64,
) -> Result<CorrelationResult> {
    ensure(ase.len() == rase.len(), "shots", || "ASE and RASE shot counts differ".into())?;
    let mut acc = CorrAccumulator::new(CorrelationKind::Cross, sample_rate, max_lag);
    for (a, r) in ase.iter().zip(rase) {
        acc.add_cross(a.as_ref(), r.as_ref())?;
    }
    acc.finish()
}

/// FWHM of |values| around its peak, by linear interpolation.
pub fn fwhm(lags: &[f64], values: &[Complex64]) -> Option<f64> {
    let mag: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    fwhm_real(lags, &mag)
}

fn fwhm_real(lags: &[f64], mag: &[f64]) -> Option<f64> {
    let (peak, &top) = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if top <= 0.0 {
        return None;
    }
    let half = top / 2.0;
    let cross = |i: usize, j: usize| lags[i] + (half - mag[i]) * (lags[j] - lags[i]) / (mag[j] - mag[i]);
    let right = (peak..mag.len() - 1).find(|&i| mag[i + 1] < half).map(|i| cross(i, i + 1))?;
    let left = (1..=peak).rev().find(|&i| mag[i - 1] < half).map(|i| cross(i, i - 1))?;
    Some(right - left)
}

/// Joint fit of the vacuum peak (Gaussian) and the signal (Voigt) to an
/// autocorrelation magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumFit {
    pub gauss_amplitude: f64,
    /// µs.
    pub gauss_sigma: f64,
    pub voigt_amplitude: f64,
    /// Gaussian and Lorentzian FWHM of the signal profile in lag, µs.
    pub voigt_gaussian_fwhm: f64,
    pub voigt_lorentzian_fwhm: f64,
    pub residual_rms: f64,
}

fn gauss(t: f64, s: f64) -> f64 {
    (-t * t / (2.0 * s * s)).exp()
}

fn voigt_peak_normalised(t: f64, g: f64, l: f64) -> f64 {
    voigt_profile(t, g, l) / voigt_profile(0.0, g, l)
}

/// Fit Gaussian + Voigt to |auto|. The Gaussian width is taken from a fit
/// to the vacuum-window autocorrelation, where only the vacuum peak exists.
const FIT_POINTS: usize = 201;

pub fn fit_vacuum_model(auto: &CorrelationResult, vacuum_auto: &CorrelationResult) -> Result<VacuumFit> {
    ensure(auto.lags == vacuum_auto.lags, "lags", || "auto and vacuum lag grids differ".into())?;
    let lags = &auto.lags;
    let vmag: Vec<f64> = vacuum_auto.values.iter().map(|z| z.norm()).collect();
    let v0 = vmag[lags.len() / 2];
    ensure(v0 > 0.0, "vacuum_auto", || "vacuum autocorrelation is zero at lag 0".into())?;
    let s0 = fwhm_real(lags, &vmag).unwrap_or(lags[lags.len() - 1]) / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let vac = nelder_mead(
        |p| {
            let (a, s) = (p[0].exp(), p[1].exp());
            lags.iter().zip(&vmag).map(|(t, m)| (a * gauss(*t, s) - m).powi(2)).sum()
        },
        &[v0.ln(), s0.max(1e-6).ln()],
        &[0.1, 0.1],
        1e-14 * v0 * v0,
        4000,
    );
    let sigma = vac.x[1].exp();

    let mag: Vec<f64> = auto.values.iter().map(|z| z.norm()).collect();
    let m0 = mag[lags.len() / 2];
    let span = lags[lags.len() - 1].max(1e-9);
    let model = |p: &[f64], t: f64| {
        p[0].exp() * gauss(t, sigma) + p[1].exp() * voigt_peak_normalised(t, p[2].exp(), p[3].exp())
    };
    // the peak is smooth on the lag grid; fit on at most FIT_POINTS lags, keeping lag 0
    let stride = lags.len().div_ceil(FIT_POINTS).max(1);
    let centre = lags.len() / 2;
    let fit_pts: Vec<(f64, f64)> = (0..lags.len())
        .filter(|i| i.abs_diff(centre) % stride == 0)
        .map(|i| (lags[i], mag[i]))
        .collect();
    let cost = |p: &[f64]| fit_pts.iter().map(|(t, m)| (model(p, *t) - m).powi(2)).sum::<f64>();
    let sig_width = fwhm_real(lags, &mag).unwrap_or(span).max(4.0 * sigma);
    let mut best = None::<crate::optim::Minimum>;
    for (frac, shape) in [(0.5f64, 0.5f64), (0.2, 0.9), (0.8, 0.1)] {
        let x0 = [
            (frac * m0).max(1e-12 * m0.max(1e-300)).ln(),
            ((1.0 - frac) * m0).max(1e-12 * m0.max(1e-300)).ln(),
            (sig_width * shape.max(0.05)).ln(),
            (sig_width * (1.0 - shape).max(0.05)).ln(),
        ];
        let r = nelder_mead(cost, &x0, &[0.5, 0.5, 0.3, 0.3], 1e-14 * m0 * m0, 5000);
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let b = best.expect("at least one start");
    let rms = (b.value / fit_pts.len() as f64).sqrt();
    if !b.value.is_finite() {
        return Err(Error::NoConvergence(format!("vacuum-peak fit diverged (residual {rms})")));
    }
    Ok(VacuumFit {
        gauss_amplitude: b.x[0].exp(),
        gauss_sigma: sigma,
        voigt_amplitude: b.x[1].exp(),
        voigt_gaussian_fwhm: b.x[2].exp(),
        voigt_lorentzian_fwhm: b.x[3].exp(),
        residual_rms: rms,
    })
}

/// Remove the fitted vacuum Gaussian from an autocorrelation.
pub fn subtract_vacuum_autocorr(
    auto: &CorrelationResult,
    vacuum_auto: &CorrelationResult,
) -> Result<(CorrelationResult, VacuumFit)> {
    let fit = fit_vacuum_model(auto, vacuum_auto)?;
    let values: Vec<Complex64> = auto
        .lags
        .iter()
        .zip(&auto.values)
        .map(|(t, z)| z - fit.gauss_amplitude * gauss(*t, fit.gauss_sigma))
        .collect();
    let out = CorrelationResult {
        fwhm: fwhm(&auto.lags, &values),
        values,
        ..auto.clone()
    };
    Ok((out, fit))
}

/// R'(t) = R̄(−t)/η · e^{t_a/T} · e^{iθ} over a window, with time measured
/// from the window centre. `eta` divides the field amplitude.
pub fn rase_transform(r: &[Complex64], eta: f64, write_time: f64, theta: f64, t_a: f64) -> Result<Vec<Complex64>> {
    ensure(eta > 0.0 && eta <= 1.0, "eta", || format!("{eta} is outside (0, 1]"))?;
    ensure(write_time > 0.0, "write_time", || "must be > 0".into())?;
    let k = Complex64::from_polar((t_a / write_time).exp() / eta, theta);
    Ok(r.iter().rev().map(|z| z.conj() * k).collect())
}

/// Inverse of [`rase_transform`] with the same parameters.
pub fn rase_transform_inverse(
    x: &[Complex64],
    eta: f64,
    write_time: f64,
    theta: f64,
    t_a: f64,
) -> Result<Vec<Complex64>> {
    ensure(eta > 0.0 && eta <= 1.0, "eta", || format!("{eta} is outside (0, 1]"))?;
    ensure(write_time > 0.0, "write_time", || "must be > 0".into())?;
    let k = Complex64::from_polar(eta * (-t_a / write_time).exp(), -theta);
    Ok(x.iter().rev().map(|z| (z * k).conj()).collect())
}

/// Pearson correlation of two real sequences.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Expected autocorrelation FWHM (µs) of a Gaussian spectrum of σ `sigma_f`
/// MHz after a demodulation filter with cutoff `fc` MHz.
pub fn expected_fwhm(sigma_f: f64, fc: f64) -> f64 {
    let sp2 = fc * fc / (2.0 * 2f64.ln());
    let s2 = 1.0 / (1.0 / (sigma_f * sigma_f) + 1.0 / sp2);
    2.0 * (2.0 * 2f64.ln()).sqrt() / (2.0 * PI * s2.sqrt())
}
