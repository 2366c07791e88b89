//! Voigt lineshapes in frequency and time.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Gaussian and Lorentzian full widths of the spin-dephasing lineshape, kHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoigtParams {
    pub gaussian_fwhm: f64,
    pub lorentzian_fwhm: f64,
}

impl VoigtParams {
    pub fn new(gaussian_fwhm: f64, lorentzian_fwhm: f64) -> Result<Self> {
        let v = VoigtParams {
            gaussian_fwhm,
            lorentzian_fwhm,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.gaussian_fwhm >= 0.0 && self.lorentzian_fwhm >= 0.0,
            "voigt",
            || "widths must be non-negative".into(),
        )?;
        ensure(self.gaussian_fwhm + self.lorentzian_fwhm > 0.0, "voigt", || {
            "at least one width must be positive".into()
        })
    }

    /// Full width at half maximum of the combined profile (Olivero–Longbothum,
    /// accurate to ~0.02%), kHz.
    pub fn fwhm(&self) -> f64 {
        let (g, l) = (self.gaussian_fwhm, self.lorentzian_fwhm);
        0.5346 * l + (0.2166 * l * l + g * g).sqrt()
    }

    /// Time-domain amplitude envelope at `t` µs.
    pub fn envelope(&self, t: f64) -> f64 {
        let t = t.abs();
        let gl = self.lorentzian_fwhm * 1e-3;
        let gg = self.gaussian_fwhm * 1e-3;
        (-PI * gl * t - (PI * gg * t).powi(2) / (4.0 * 2f64.ln())).exp()
    }

    /// Normalised lineshape density at detuning `f` kHz, per kHz.
    pub fn density(&self, f: f64) -> f64 {
        voigt_profile(f, self.gaussian_fwhm, self.lorentzian_fwhm)
    }
}

const WEIDEMAN_N: usize = 32;

fn weideman_coeffs() -> &'static (f64, Vec<f64>) {
    static C: OnceLock<(f64, Vec<f64>)> = OnceLock::new();
    C.get_or_init(|| {
        let n = WEIDEMAN_N;
        let m = 2 * n;
        let m2 = 2 * m;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        // f sampled on k = −M+1 .. M−1 with a leading zero, then fftshifted.
        let mut f = vec![0.0; m2];
        for (idx, k) in (-(m as isize) + 1..m as isize).enumerate() {
            let theta = k as f64 * PI / m as f64;
            let t = l * (theta / 2.0).tan();
            f[idx + 1] = (-t * t).exp() * (l * l + t * t);
        }
        let shifted: Vec<f64> = (0..m2).map(|i| f[(i + m) % m2]).collect();
        // Real part of the DFT, divided by 2M.
        let a: Vec<f64> = (0..m2)
            .map(|k| {
                shifted
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0 * PI * (k * j) as f64 / m2 as f64).cos())
                    .sum::<f64>()
                    / m2 as f64
            })
            .collect();
        let coeffs: Vec<f64> = a[1..=n].iter().rev().cloned().collect();
        (l, coeffs)
    })
}

/// Faddeeva function w(z) = e^{−z²} erfc(−iz) by Weideman's rational
/// expansion with 32 terms.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return (-z * z).exp() * 2.0 - faddeeva(-z);
    }
    let (l, a) = weideman_coeffs();
    let i = Complex64::i();
    let lz = *l - i * z;
    let big_z = (*l + i * z) / lz;
    let p = a.iter().fold(Complex64::default(), |acc, &c| acc * big_z + c);
    p * 2.0 / (lz * lz) + (1.0 / PI.sqrt()) / lz
}

/// Voigt density at `f` for full widths `g_fwhm` (Gaussian) and `l_fwhm`
/// (Lorentzian), all in the same frequency unit; unit area.
pub fn voigt_profile(f: f64, g_fwhm: f64, l_fwhm: f64) -> f64 {
    let gamma = l_fwhm / 2.0;
    if g_fwhm == 0.0 {
        return gamma / (PI * (f * f + gamma * gamma));
    }
    let sigma = g_fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let z = Complex64::new(f, gamma) / (sigma * 2f64.sqrt());
    faddeeva(z).re / (sigma * (2.0 * PI).sqrt())
}
