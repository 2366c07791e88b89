//! Decay-envelope fitting and linewidth/decay-time conversion.

use serde::{Deserialize, Serialize};

use super::lineshape::{envelope_from_lineshape, Lineshape};
use super::voigt::VoigtParams;
use crate::error::{ensure, Error, Result};
use crate::optim::{bisect, nelder_mead};

/// Result of fitting an echo-amplitude decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFit {
    /// Delay at which the fitted envelope falls to 1/e, µs.
    pub t_1e: f64,
    pub voigt: VoigtParams,
    /// Detuning spread of the fixed gradient lineshape, Hz.
    pub gradient_contribution: f64,
    /// RMS residual relative to the largest data point.
    pub residual_rms: f64,
}

/// Model held fixed while fitting Voigt widths.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayModel {
    pub gradient: Option<Lineshape>,
    /// Dephasing time per unit of measured delay. Storage-time scans dephase
    /// for the full t_b (1.0); write-time scans accumulate spin-like phase for
    /// about half of 2·t_a + t_b (0.5).
    pub clock: f64,
}

pub const WRITE_CLOCK: f64 = 0.5;
pub const STORAGE_CLOCK: f64 = 1.0;

impl DecayModel {
    pub fn voigt_only(clock: f64) -> Self {
        DecayModel { gradient: None, clock }
    }

    pub fn with_gradient(gradient: Lineshape, clock: f64) -> Self {
        DecayModel {
            gradient: Some(gradient),
            clock,
        }
    }

    fn gradient_envelope(&self, delays: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => {
                let t: Vec<f64> = delays.iter().map(|d| d * self.clock).collect();
                envelope_from_lineshape(g, &t)
            }
            None => vec![1.0; delays.len()],
        }
    }

    /// Normalised envelope at each delay.
    pub fn envelope(&self, voigt: &VoigtParams, delays: &[f64]) -> Vec<f64> {
        let g = self.gradient_envelope(delays);
        delays
            .iter()
            .zip(g)
            .map(|(d, gv)| voigt.envelope(d * self.clock) * gv)
            .collect()
    }

    /// First delay at which the envelope reaches 1/e.
    pub fn t_1e(&self, voigt: &VoigtParams) -> Result<f64> {
        let target = (-1.0f64).exp();
        let f = |d: f64| self.envelope(voigt, &[d])[0] - target;
        // Coarse scan so a modulated envelope is caught at its first crossing.
        let rough = 1.0 / (std::f64::consts::PI * voigt.fwhm().max(1e-9) * 1e-3 * self.clock);
        let step = rough / 64.0;
        let mut lo = 0.0;
        for k in 1..=(64 * 4096) {
            let hi = k as f64 * step;
            if f(hi) <= 0.0 {
                return bisect(f, lo, hi, 1e-10 * hi).ok_or_else(|| Error::NoConvergence("1/e crossing".into()));
            }
            lo = hi;
        }
        Err(Error::NoConvergence("envelope never reaches 1/e".into()))
    }
}

/// Pointwise product of the Voigt envelope and the gradient envelope at
/// dephasing times `times` µs.
///
/// Convolving the two lineshapes multiplies their time envelopes, which keeps
/// the value at t = 0 equal to 1.
pub fn total_envelope(voigt: &VoigtParams, grad: &Lineshape, times: &[f64]) -> Vec<f64> {
    envelope_from_lineshape(grad, times)
        .into_iter()
        .zip(times)
        .map(|(g, &t)| voigt.envelope(t) * g)
        .collect()
}

/// Least-squares fit of Voigt widths (and a free amplitude) to
/// (delay µs, amplitude) points. Three simplex starts cover the
/// Gaussian-dominated, Lorentzian-dominated and mixed regions.
pub fn fit_decay(points: &[(f64, f64)], model: &DecayModel) -> Result<DecayFit> {
    ensure(points.len() >= 6, "points", || format!("need at least 6 points, got {}", points.len()))?;
    ensure(
        points.iter().all(|(d, a)| d.is_finite() && *d >= 0.0 && a.is_finite() && *a > 0.0),
        "points",
        || "delays must be >= 0 and amplitudes > 0".into(),
    )?;
    ensure(model.clock > 0.0, "clock", || "must be > 0".into())?;
    let delays: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let grad = model.gradient_envelope(&delays);
    let ymax = ys.iter().cloned().fold(0.0, f64::max);

    let sse_amp = |v: &VoigtParams| -> (f64, f64) {
        let m: Vec<f64> = delays
            .iter()
            .zip(&grad)
            .map(|(d, g)| v.envelope(d * model.clock) * g)
            .collect();
        let mm: f64 = m.iter().map(|x| x * x).sum();
        if mm == 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let amp = m.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / mm;
        let sse = m.iter().zip(&ys).map(|(a, b)| (b - amp * a).powi(2)).sum();
        (sse, amp)
    };
    let from_log = |x: &[f64]| VoigtParams {
        gaussian_fwhm: x[0].exp(),
        lorentzian_fwhm: x[1].exp(),
    };

    let t_e = rough_decay_time(&delays, &ys);
    let l0 = 1e3 / (std::f64::consts::PI * model.clock * t_e);
    let g0 = l0 * 2.0 * 2f64.ln().sqrt();
    let starts = [[0.95 * g0, 0.05 * l0], [0.05 * g0, 0.95 * l0], [0.6 * g0, 0.5 * l0]];

    let scale: f64 = ys.iter().map(|y| y * y).sum();
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for s in starts {
        let x0 = [s[0].ln(), s[1].ln()];
        let m = nelder_mead(|x| sse_amp(&from_log(x)).0 / scale, &x0, &[0.7, 0.7], 1e-16, 4000);
        if best.as_ref().is_none_or(|b| m.value < b.0) {
            best = Some((m.value, m.x, m.converged));
        }
    }
    let (val, x, converged) = best.expect("at least one start");
    let voigt = from_log(&x);
    let residual_rms = (val * scale / ys.len() as f64).sqrt() / ymax;
    if !converged {
        return Err(Error::NoConvergence(format!(
            "simplex did not settle; best G={:.4} kHz L={:.4} kHz, residual rms {residual_rms:.3e}",
            voigt.gaussian_fwhm, voigt.lorentzian_fwhm
        )));
    }
    Ok(DecayFit {
        t_1e: model.t_1e(&voigt)?,
        voigt,
        gradient_contribution: model.gradient.as_ref().map_or(0.0, Lineshape::support_width),
        residual_rms,
    })
}

/// Delay where the data first fall below 1/e of their maximum, with a
/// log-linear extrapolation if they never do.
fn rough_decay_time(delays: &[f64], ys: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..delays.len()).collect();
    idx.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]));
    let y0 = ys[idx[0]];
    let target = y0 / std::f64::consts::E;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if ys[b] <= target && ys[a] > target {
            let f = (ys[a] - target) / (ys[a] - ys[b]);
            return delays[a] + f * (delays[b] - delays[a]);
        }
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let slope = (ys[last].ln() - y0.ln()) / (delays[last] - delays[first]).max(1e-12);
    if slope < 0.0 {
        -1.0 / slope
    } else {
        10.0 * delays[last].max(1.0)
    }
}

/// Split a total Voigt FWHM (kHz) into Gaussian and Lorentzian parts so that
/// the model envelope reaches 1/e at `t_1e` µs.
pub fn solve_voigt_split(total_fwhm: f64, t_1e: f64, model: &DecayModel) -> Result<VoigtParams> {
    ensure(total_fwhm > 0.0 && t_1e > 0.0, "voigt split", || "width and time must be > 0".into())?;
    let params = |l: f64| {
        let g2 = (total_fwhm - 0.5346 * l).powi(2) - 0.2166 * l * l;
        VoigtParams {
            gaussian_fwhm: g2.max(0.0).sqrt(),
            lorentzian_fwhm: l,
        }
    };
    let l_max = total_fwhm;
    let h = |l: f64| model.t_1e(&params(l)).map_or(f64::NAN, |t| t - t_1e);
    let (a, b) = (h(0.0), h(l_max));
    if !(a.signum() != b.signum()) {
        return Err(Error::invalid(
            "voigt split",
            format!(
                "a {total_fwhm} kHz profile gives 1/e times from {:.2} to {:.2} us; {t_1e} us is unreachable",
                b + t_1e,
                a + t_1e
            ),
        ));
    }
    let l = bisect(h, 0.0, l_max, 1e-12).ok_or_else(|| Error::NoConvergence("voigt split".into()))?;
    Ok(params(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn synth(v: &VoigtParams, model: &DecayModel, delays: &[f64], noise: f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = crate::seed::rng(seed);
        delays
            .iter()
            .zip(model.envelope(v, delays))
            .map(|(d, e)| {
                let n: f64 = rng.sample(StandardNormal);
                (*d, e * (1.0 + noise * n))
            })
            .collect()
    }

    #[test]
    fn exponential_data_gives_lorentzian_fit() {
        let tau = 40.0;
        let pts: Vec<_> = (0..30).map(|k| (k as f64 * 4.0, (-(k as f64 * 4.0) / tau).exp())).collect();
        let fit = fit_decay(&pts, &DecayModel::voigt_only(1.0)).unwrap();
        assert!((fit.t_1e / tau - 1.0).abs() < 0.02, "{fit:?}");
        assert!(fit.voigt.lorentzian_fwhm > 5.0 * fit.voigt.gaussian_fwhm, "{fit:?}");
    }

    #[test]
    fn round_trip_noiseless() {
        let v = VoigtParams::new(3.0, 2.0).unwrap();
        let m = DecayModel::voigt_only(1.0);
        let delays: Vec<f64> = (0..40).map(|k| k as f64 * 5.0).collect();
        let fit = fit_decay(&synth(&v, &m, &delays, 0.0, 0), &m).unwrap();
        assert!((fit.voigt.gaussian_fwhm / 3.0 - 1.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.voigt.lorentzian_fwhm / 2.0 - 1.0).abs() < 1e-3, "{fit:?}");
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = [(0.0, 1.0), (1.0, 0.5)];
        assert!(fit_decay(&pts, &DecayModel::voigt_only(1.0)).unwrap_err().is_validation());
    }

    #[test]
    fn split_reproduces_target() {
        let m = DecayModel::voigt_only(STORAGE_CLOCK);
        let v = solve_voigt_split(14.8, 25.1, &m).unwrap();
        assert!((v.fwhm() - 14.8).abs() < 1e-6);
        assert!((m.t_1e(&v).unwrap() - 25.1).abs() < 1e-6);
        assert!(solve_voigt_split(1.0, 25.1, &m).is_err());
    }
}
