//! EPR-type inseparability of the (ASE, RASE) mode pair.
//!
//! With û = √b·I_A + √(1−b)·I_R and v̂ = √b·Q_A + √(1−b)·Q_R, the pair is
//! entangled if λ(b) = ⟨(Δû)²⟩ + ⟨(Δv̂)²⟩ < 2 for some b. Quadratures must be
//! in vacuum units, which is checked against vacuum-window projections.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::optim::golden;
use crate::quantum::{db_to_gain, Quadratures};
use crate::seed::sub_rng;
use crate::trace::{TimeTrace, WindowKind};

pub const DEFAULT_B_STEP: f64 = 0.001;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const MIN_SHOTS: usize = 100;
/// Largest tolerated relative deviation of the vacuum variance from 1.
pub const VACUUM_TOLERANCE: f64 = 0.05;

/// Second moments of the shot quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub ia2: f64,
    pub ir2: f64,
    pub iair: f64,
    pub qa2: f64,
    pub qr2: f64,
    pub qaqr: f64,
}

impl Moments {
    /// Central moments with 1/n normalisation.
    pub fn from_shots(shots: &[Quadratures]) -> Self {
        let idx: Vec<usize> = (0..shots.len()).collect();
        Self::from_indices(shots, &idx)
    }

    fn from_indices(shots: &[Quadratures], idx: &[usize]) -> Self {
        let n = idx.len() as f64;
        let mut mean = [0.0; 4];
        for &k in idx {
            for (m, v) in mean.iter_mut().zip(shots[k].as_array()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut s = Moments::default();
        for &k in idx {
            let [ia, qa, ir, qr] = shots[k].as_array();
            let (ia, qa, ir, qr) = (ia - mean[0], qa - mean[1], ir - mean[2], qr - mean[3]);
            s.ia2 += ia * ia;
            s.ir2 += ir * ir;
            s.iair += ia * ir;
            s.qa2 += qa * qa;
            s.qr2 += qr * qr;
            s.qaqr += qa * qr;
        }
        Moments {
            ia2: s.ia2 / n,
            ir2: s.ir2 / n,
            iair: s.iair / n,
            qa2: s.qa2 / n,
            qr2: s.qr2 / n,
            qaqr: s.qaqr / n,
        }
    }

    /// Source moments of a two-mode squeezer with power gain `gain_db`, in the
    /// conjugated RASE frame.
    pub fn two_mode_squeezed(gain_db: f64) -> Self {
        let g = db_to_gain(gain_db);
        let v = 2.0 * g - 1.0;
        let c = 2.0 * (g * (g - 1.0)).sqrt();
        Moments {
            ia2: v,
            ir2: v,
            iair: -c,
            qa2: v,
            qr2: v,
            qaqr: -c,
        }
    }
}

/// λ(b) for source moments passed through recall `eta` and transmission `l`.
/// With `eta = l = 1` this is λ(b) of the given moments themselves.
pub fn insep_model(b: f64, eta: f64, l: f64, m: &Moments) -> f64 {
    let quad = |a2: f64, r2: f64, ar: f64| {
        b * (l * a2 + (1.0 - l))
            + (1.0 - b) * (l * (eta * r2 + (1.0 - eta)) + (1.0 - l))
            + 2.0 * (b * (1.0 - b)).sqrt() * l * eta.sqrt() * ar
    };
    quad(m.ia2, m.ir2, m.iair) + quad(m.qa2, m.qr2, m.qaqr)
}

/// Minimum of the model over b ∈ [0, 1]: (λ_min, b_min).
pub fn model_minimum(eta: f64, l: f64, m: &Moments) -> (f64, f64) {
    let f = |b: f64| insep_model(b, eta, l, m);
    let grid = 1000;
    let k: usize = (0..=grid)
        .min_by(|&x, &y| f(x as f64 / grid as f64).total_cmp(&f(y as f64 / grid as f64)))
        .unwrap_or(0);
    let lo = (k.saturating_sub(1)) as f64 / grid as f64;
    let hi = ((k + 1).min(grid)) as f64 / grid as f64;
    let b = golden(f, lo, hi, 1e-12);
    (f(b), b)
}

pub fn squeezing_db(lambda_min: f64) -> Result<f64> {
    ensure(lambda_min > 0.0 && lambda_min.is_finite(), "lambda_min", || {
        format!("{lambda_min} must be positive")
    })?;
    Ok(-10.0 * (lambda_min / 2.0).log10())
}

pub fn b_grid(step: f64) -> Result<Vec<f64>> {
    ensure(step > 0.0 && step <= 0.5, "b_step", || format!("{step} is outside (0, 0.5]"))?;
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

fn curve(m: &Moments, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&b| insep_model(b, 1.0, 1.0, m)).collect()
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsepOptions {
    pub b_step: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for InsepOptions {
    fn default() -> Self {
        InsepOptions {
            b_step: DEFAULT_B_STEP,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsepResult {
    pub b_grid: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_min: f64,
    pub b_min: f64,
    pub sigma_min: f64,
    pub certainty_sigma: f64,
    pub moments: Moments,
    pub vacuum_variance: f64,
    pub n_shots: usize,
}

/// Variance of vacuum-window quadratures (zero mean assumed).
pub fn vacuum_variance(vacuum: &[f64]) -> f64 {
    vacuum.iter().map(|v| v * v).sum::<f64>() / vacuum.len().max(1) as f64
}

/// λ(b) over the grid, its minimum, and a bootstrap error of the minimum.
pub fn inseparability(shots: &[Quadratures], vacuum: &[f64], opts: &InsepOptions) -> Result<InsepResult> {
    ensure(shots.len() >= MIN_SHOTS, "shots", || {
        format!("need at least {MIN_SHOTS} shots, got {}", shots.len())
    })?;
    ensure(!vacuum.is_empty(), "vacuum", || "no vacuum quadratures to check normalisation".into())?;
    let vv = vacuum_variance(vacuum);
    if (vv - 1.0).abs() > VACUUM_TOLERANCE {
        return Err(Error::invalid(
            "vacuum",
            format!("vacuum quadrature variance is {vv:.4}, not 1 within {VACUUM_TOLERANCE}; recalibrate"),
        ));
    }
    let grid = b_grid(opts.b_step)?;
    let moments = Moments::from_shots(shots);
    let lambda = curve(&moments, &grid);
    let k = argmin(&lambda);
    let n = shots.len();
    let mins: Vec<f64> = (0..opts.bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = sub_rng(opts.seed, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let m = Moments::from_indices(shots, &idx);
            curve(&m, &grid).into_iter().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let sigma = if mins.len() >= 2 {
        let mu = mins.iter().sum::<f64>() / mins.len() as f64;
        (mins.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (mins.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(InsepResult {
        lambda_min: lambda[k],
        b_min: grid[k],
        certainty_sigma: (2.0 - lambda[k]) / sigma,
        sigma_min: sigma,
        b_grid: grid,
        lambda,
        moments,
        vacuum_variance: vv,
        n_shots: n,
    })
}

/// Uncalibrated box-mode projections of one prepared (baseband) shot.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedShot {
    pub ase: Complex64,
    /// Projection of the time-reversed conjugate RASE window.
    pub rase: Complex64,
    pub vacuum: Vec<Complex64>,
}

fn box_mode(x: &[Complex64]) -> Complex64 {
    x.iter().sum::<Complex64>() / (x.len() as f64).sqrt()
}

/// Project the ASE window, the time-reversed conjugate RASE window and
/// equal-length vacuum sub-windows onto a flat temporal mode.
pub fn project(trace: &TimeTrace) -> Result<ProjectedShot> {
    let a = trace.first_window(WindowKind::Ase)?;
    let r = trace.first_window(WindowKind::Rase)?;
    let v = trace.first_window(WindowKind::Vacuum)?;
    let aw = trace.window(a);
    let rw = trace.window(r);
    ensure(aw.len() == rw.len() && !aw.is_empty(), "windows", || {
        format!("ASE and RASE windows differ in length ({} vs {})", aw.len(), rw.len())
    })?;
    let l = aw.len();
    let vw = trace.window(v);
    ensure(vw.len() >= l, "windows", || "vacuum window is shorter than the analysis window".into())?;
    // reversing does not change a flat sum, so only the conjugate remains
    let rase = box_mode(rw).conj();
    Ok(ProjectedShot {
        ase: box_mode(aw),
        rase,
        vacuum: vw.chunks_exact(l).map(box_mode).collect(),
    })
}

/// Shots and vacuum quadratures in calibrated vacuum units.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub shots: Vec<Quadratures>,
    pub vacuum: Vec<f64>,
    /// Factor applied to raw projections.
    pub scale: f64,
}

/// Scale all projections so the pooled vacuum quadrature variance is 1.
pub fn calibrate(projected: &[ProjectedShot]) -> Result<Calibrated> {
    let raw_vac: Vec<f64> = projected
        .iter()
        .flat_map(|p| p.vacuum.iter().flat_map(|z| [z.re, z.im]))
        .collect();
    ensure(!raw_vac.is_empty(), "vacuum", || "no vacuum projections".into())?;
    let v = vacuum_variance(&raw_vac);
    ensure(v > 0.0, "vacuum", || "vacuum window carries no noise".into())?;
    let s = 1.0 / v.sqrt();
    Ok(Calibrated {
        shots: projected
            .iter()
            .map(|p| Quadratures {
                i_a: s * p.ase.re,
                q_a: s * p.ase.im,
                i_r: s * p.rase.re,
                q_r: s * p.rase.im,
            })
            .collect(),
        vacuum: raw_vac.iter().map(|x| x * s).collect(),
        scale: s,
    })
}
