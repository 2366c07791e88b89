//! One-dimensional linear Maxwell–Bloch propagation through an inverted
//! spectral feature.
//!
//! Coherences p_j(z, t) on a detuning grid obey ∂t p = −iΔ p + w E, and the
//! field obeys ∂z E = K Σ g_j p_j − (α_bg/2) E with z ∈ [0, 1]. The inversion
//! w is +1 before rephasing and −1 after it. Rephasing is instantaneous:
//! p → √ε_r · p̄.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::sequence::PulseSequence;
use crate::trace::{TimeTrace, WindowKind, WindowSpec};

/// Width of the prepared spectral feature, MHz.
pub const FEATURE_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbeConfig {
    pub alpha_l_gain: f64,
    pub alpha_l_background: f64,
    pub rephasing_efficiency: f64,
    /// MHz, evenly spaced bin centres covering the feature.
    pub detuning_grid: Vec<f64>,
    pub space_steps: usize,
    /// µs.
    pub time_step: f64,
}

impl MbeConfig {
    /// Default grid: 64 detunings across a 1 MHz top-hat, 64 slices, 20 ns steps.
    pub fn new(alpha_l_gain: f64, alpha_l_background: f64, rephasing_efficiency: f64) -> Self {
        MbeConfig {
            alpha_l_gain,
            alpha_l_background,
            rephasing_efficiency,
            detuning_grid: top_hat_grid(FEATURE_WIDTH, 64),
            space_steps: 64,
            time_step: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.alpha_l_gain.is_finite() && self.alpha_l_gain >= 0.0, "alpha_l_gain", || {
            format!("{} must be >= 0", self.alpha_l_gain)
        })?;
        ensure(
            self.alpha_l_background.is_finite() && self.alpha_l_background >= 0.0,
            "alpha_l_background",
            || format!("{} must be >= 0", self.alpha_l_background),
        )?;
        ensure(
            (0.0..=1.0).contains(&self.rephasing_efficiency),
            "rephasing_efficiency",
            || format!("{} is outside [0, 1]", self.rephasing_efficiency),
        )?;
        ensure(self.space_steps >= 8, "space_steps", || format!("{} < 8", self.space_steps))?;
        ensure(self.detuning_grid.len() >= 2, "detuning_grid", || "need at least 2 points".into())?;
        ensure(self.time_step > 0.0, "time_step", || "must be > 0".into())?;
        let limit = self.max_stable_step();
        if self.time_step > limit {
            return Err(Error::StepSize {
                time_step: self.time_step,
                suggested: limit,
            });
        }
        Ok(())
    }

    /// Spectral span of the feature implied by the grid, MHz.
    pub fn feature_width(&self) -> f64 {
        let lo = self.detuning_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.detuning_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) * self.detuning_grid.len() as f64 / (self.detuning_grid.len() - 1) as f64
    }

    /// Largest RK4 step keeping the fastest mode inside the stability region
    /// on the imaginary axis (|λ dt| ≤ 2.8) with margin.
    pub fn max_stable_step(&self) -> f64 {
        let max_det = self.detuning_grid.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let rate = 2.0 * PI * max_det + self.alpha_l_gain * self.feature_width() + 1e-12;
        2.0 / rate
    }

    /// Time after which the discrete detuning grid rephases spuriously, µs.
    pub fn recurrence_time(&self) -> f64 {
        self.detuning_grid.len() as f64 / self.feature_width()
    }
}

/// Bin centres of an `n`-point grid covering a top-hat of full width `w`.
pub fn top_hat_grid(w: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| w * ((j as f64 + 0.5) / n as f64 - 0.5)).collect()
}

#[derive(Debug, Clone)]
pub struct MbeResult {
    pub output: TimeTrace,
    /// Echo energy over the energy the feature's gain adds to the input.
    pub efficiency: f64,
    /// Transmitted input energy gain, dB.
    pub gain_db_measured: f64,
    pub input_energy: f64,
    pub transmitted_energy: f64,
    pub echo_energy: f64,
}

struct Medium<'a> {
    cfg: &'a MbeConfig,
    detunings: Vec<f64>,
    coupling: f64,
    weight: f64,
    dz: f64,
    nz: usize,
}

impl Medium<'_> {
    /// Field at every slice given coherences `p` (row-major [z][detuning]).
    fn field(&self, p: &[Complex64], e_in: Complex64, e: &mut [Complex64]) {
        let nd = self.detunings.len();
        let att = (-self.cfg.alpha_l_background * self.dz / 2.0).exp();
        let src = |k: usize| -> Complex64 {
            let row = &p[k * nd..(k + 1) * nd];
            row.iter().sum::<Complex64>() * (self.coupling * self.weight)
        };
        e[0] = e_in;
        let mut s_prev = src(0);
        for k in 0..self.nz {
            let s_next = src(k + 1);
            e[k + 1] = e[k] * att + (s_prev * att + s_next) * (0.5 * self.dz);
            s_prev = s_next;
        }
    }

    fn rhs(&self, p: &[Complex64], e_in: Complex64, w: f64, e: &mut [Complex64], out: &mut [Complex64]) {
        self.field(p, e_in, e);
        let nd = self.detunings.len();
        for k in 0..=self.nz {
            let ek = e[k] * w;
            for j in 0..nd {
                let i = k * nd + j;
                out[i] = Complex64::new(0.0, -self.detunings[j]) * p[i] + ek;
            }
        }
    }
}

fn sample_linear(x: &[Complex64], rate: f64, t: f64) -> Complex64 {
    let pos = t * rate;
    if pos < 0.0 || pos > (x.len() - 1) as f64 {
        return Complex64::default();
    }
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let f = pos - i as f64;
    x[i] * (1.0 - f) + x[i + 1] * f
}

/// Propagate `input` through the medium, rephase t_a after the input window
/// ends, and collect the transmitted pulse and its echo.
pub fn mbe_simulate(cfg: &MbeConfig, seq: &PulseSequence, input: &TimeTrace) -> Result<MbeResult> {
    cfg.validate()?;
    input.validate()?;
    let in_win = input
        .windows_of(WindowKind::Input)
        .next()
        .copied()
        .unwrap_or(WindowSpec::new(WindowKind::Input, 0.0, input.duration()));
    let (s0, s1) = (in_win.start, in_win.end());
    let t_r = s1 + seq.t_a;
    let t_end = 2.0 * t_r - s0;
    ensure(t_end - s0 <= cfg.recurrence_time(), "detuning_grid", || {
        format!(
            "simulated span {:.1} us exceeds the grid recurrence time {:.1} us",
            t_end - s0,
            cfg.recurrence_time()
        )
    })?;

    let nd = cfg.detuning_grid.len();
    let nz = cfg.space_steps;
    let width = cfg.feature_width();
    // Uniform density 1/(2πW) per rad/µs gives power gain e^{αL} at resonance.
    let density = 1.0 / (2.0 * PI * width);
    let med = Medium {
        cfg,
        detunings: cfg.detuning_grid.iter().map(|d| 2.0 * PI * d).collect(),
        coupling: cfg.alpha_l_gain / (2.0 * PI * density),
        weight: 1.0 / nd as f64,
        dz: 1.0 / nz as f64,
        nz,
    };

    let dt = cfg.time_step;
    let n_steps = (t_end / dt).ceil() as usize;
    let in_at = |t: f64| -> Complex64 {
        if t < s0 || t > s1 {
            Complex64::default()
        } else {
            sample_linear(&input.samples, input.sample_rate, t)
        }
    };

    let len = (nz + 1) * nd;
    let mut p = vec![Complex64::default(); len];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Complex64::default(); len], vec![Complex64::default(); len], vec![Complex64::default(); len], vec![Complex64::default(); len]);
    let mut tmp = vec![Complex64::default(); len];
    let mut e = vec![Complex64::default(); nz + 1];
    let mut out = Vec::with_capacity(n_steps);
    let mut w = 1.0;
    let mut rephased = false;
    let sqrt_er = cfg.rephasing_efficiency.sqrt();

    for step in 0..n_steps {
        let t = step as f64 * dt;
        if !rephased && t >= t_r - 1e-12 {
            for z in p.iter_mut() {
                *z = z.conj() * sqrt_er;
            }
            w = -1.0;
            rephased = true;
        }
        med.field(&p, in_at(t), &mut e);
        out.push(e[nz]);

        med.rhs(&p, in_at(t), w, &mut e, &mut k1);
        for i in 0..len {
            tmp[i] = p[i] + k1[i] * (dt / 2.0);
        }
        med.rhs(&tmp, in_at(t + dt / 2.0), w, &mut e, &mut k2);
        for i in 0..len {
            tmp[i] = p[i] + k2[i] * (dt / 2.0);
        }
        med.rhs(&tmp, in_at(t + dt / 2.0), w, &mut e, &mut k3);
        for i in 0..len {
            tmp[i] = p[i] + k3[i] * dt;
        }
        med.rhs(&tmp, in_at(t + dt), w, &mut e, &mut k4);
        for i in 0..len {
            p[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }

    let energy = |from: f64, to: f64, f: &dyn Fn(usize) -> Complex64| -> f64 {
        (0..n_steps)
            .filter(|&s| {
                let t = s as f64 * dt;
                t >= from - 1e-12 && t < to - 1e-12
            })
            .map(|s| f(s).norm_sqr())
            .sum::<f64>()
            * dt
    };
    let input_energy = energy(s0, s1 + 1e-9, &|s| in_at(s as f64 * dt));
    ensure(input_energy > 0.0, "input", || "input window carries no energy".into())?;
    let transmitted = energy(0.0, t_r, &|s| out[s]);
    let echo = energy(t_r, f64::INFINITY, &|s| out[s]);

    let g = cfg.alpha_l_gain.exp();
    for (what, e_out) in [("transmitted", transmitted), ("echo", echo)] {
        if !e_out.is_finite() || e_out > g * input_energy * 1.02 {
            return Err(Error::NoConvergence(format!(
                "{what} energy {e_out:.4e} exceeds the gain bound {:.4e}; reduce time_step or refine the grid",
                g * input_energy
            )));
        }
    }
    let efficiency = if g > 1.0 { echo / ((g - 1.0) * input_energy) } else { 0.0 };

    let windows = vec![
        WindowSpec::new(WindowKind::Input, s0, s1 - s0),
        WindowSpec::new(WindowKind::Echo, 2.0 * t_r - s1, s1 - s0),
    ];
    let mut output = TimeTrace::new(1.0 / dt, out, input.het_freq, windows, input.seed)?;
    output.mix_freq = input.mix_freq;
    Ok(MbeResult {
        output,
        efficiency,
        gain_db_measured: 10.0 * (transmitted / input_energy).log10(),
        input_energy,
        transmitted_energy: transmitted,
        echo_energy: echo,
    })
}

/// Gaussian probe of the given FWHM centred in an input window of `length` µs.
pub fn gaussian_input(fwhm: f64, length: f64, sample_rate: f64) -> TimeTrace {
    let n = (length * sample_rate).round() as usize + 1;
    let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
    let c = length / 2.0;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_rate;
            Complex64::new((-0.5 * ((t - c) / sigma).powi(2)).exp(), 0.0)
        })
        .collect();
    let win = WindowSpec::new(WindowKind::Input, 0.0, length);
    TimeTrace::new(sample_rate, samples, 0.0, vec![win], 0).expect("probe trace is valid")
}
