//! Recall-efficiency models and gain measurement.

mod mbe;

pub use mbe::{gaussian_input, mbe_simulate, top_hat_grid, MbeConfig, MbeResult, FEATURE_WIDTH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::sequence::{build_i4le, PulseSequence};
use crate::trace::{TimeTrace, WindowSpec};

/// Power gain in dB to the gain-length product αL.
pub fn gain_db_to_alpha_l(gain_db: f64) -> f64 {
    gain_db / 10.0 * std::f64::consts::LN_10
}

pub fn alpha_l_to_gain_db(alpha_l: f64) -> f64 {
    10.0 * alpha_l / std::f64::consts::LN_10
}

/// The closed form exactly as published: 8 sinh²(x/2) / (2eˣ − 2).
pub fn ledingham_formula(alpha_l: f64) -> f64 {
    if alpha_l == 0.0 {
        return 0.0;
    }
    8.0 * (alpha_l / 2.0).sinh().powi(2) / (2.0 * alpha_l.exp() - 2.0)
}

/// Ideal recall efficiency, 1 − e^{−αL}, the simplified form of
/// [`ledingham_formula`].
pub fn ledingham_efficiency(alpha_l: f64) -> f64 {
    -(-alpha_l).exp_m1()
}

/// Fraction of recall surviving write-time dephasing over 2·t_a.
pub fn write_time_factor(t_a: f64, write_time: f64) -> f64 {
    (-2.0 * t_a / write_time).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gain_db: f64,
    pub eff_mbe: f64,
    pub eff_ledingham: f64,
}

/// Parameters of the efficiency-curve runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSetup {
    pub t_a: f64,
    pub t_b: f64,
    pub probe_fwhm: f64,
    pub probe_window: f64,
    /// Template for grid and step; gain and losses are overwritten per point.
    pub mbe: MbeConfig,
}

impl Default for CurveSetup {
    fn default() -> Self {
        CurveSetup {
            t_a: 6.0,
            t_b: 0.1,
            probe_fwhm: 2.0,
            probe_window: 6.0,
            mbe: MbeConfig::new(0.0, 0.0, 1.0),
        }
    }
}

impl CurveSetup {
    pub fn sequence(&self) -> Result<PulseSequence> {
        build_i4le(self.t_a, self.t_b, 1.0, 1e-4)
    }

    pub fn probe(&self) -> TimeTrace {
        gaussian_input(self.probe_fwhm, self.probe_window, 1.0 / self.mbe.time_step)
    }

    pub fn run(&self, gain_db: f64, bg: f64, eps_r: f64) -> Result<MbeResult> {
        let cfg = MbeConfig {
            alpha_l_gain: gain_db_to_alpha_l(gain_db),
            alpha_l_background: bg,
            rephasing_efficiency: eps_r,
            ..self.mbe.clone()
        };
        mbe_simulate(&cfg, &self.sequence()?, &self.probe())
    }
}

/// MBE and closed-form efficiency at each gain; points are independent and
/// evaluated in parallel.
pub fn efficiency_curve(gains_db: &[f64], bg: f64, eps_r: f64) -> Result<Vec<CurvePoint>> {
    efficiency_curve_with(&CurveSetup::default(), gains_db, bg, eps_r)
}

pub fn efficiency_curve_with(setup: &CurveSetup, gains_db: &[f64], bg: f64, eps_r: f64) -> Result<Vec<CurvePoint>> {
    for &g in gains_db {
        ensure((0.0..=40.0).contains(&g), "gains_db", || format!("{g} dB is outside [0, 40]"))?;
    }
    gains_db
        .par_iter()
        .map(|&g| {
            let r = setup.run(g, bg, eps_r)?;
            Ok(CurvePoint {
                gain_db: g,
                eff_mbe: r.efficiency,
                eff_ledingham: ledingham_efficiency(gain_db_to_alpha_l(g)),
            })
        })
        .collect()
}

/// Fitted loss parameters of the MBE curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    pub background: f64,
    pub rephasing_efficiency: f64,
    /// Combined scale ε_r·e^{−α_bg L} multiplying the ideal curve.
    pub scale: f64,
}

/// Fit background absorption to measured (gain dB, efficiency) points with
/// ε_r held fixed.
///
/// In the linear medium the recalled energy factorises as
/// ε_r·e^{−α_bg L}·(1 − e^{−αL}), so only the product is identifiable; it is
/// found by linear least squares and converted to α_bg L.
pub fn fit_background(points: &[(f64, f64)], eps_r: f64) -> Result<LossFit> {
    ensure(!points.is_empty(), "points", || "need at least one point".into())?;
    ensure(eps_r > 0.0 && eps_r <= 1.0, "rephasing_efficiency", || format!("{eps_r} is outside (0, 1]"))?;
    let (mut num, mut den) = (0.0, 0.0);
    for &(g, eff) in points {
        let shape = ledingham_efficiency(gain_db_to_alpha_l(g));
        num += shape * eff;
        den += shape * shape;
    }
    if den == 0.0 {
        return Err(Error::invalid("points", "all points are at zero gain"));
    }
    let scale = num / den;
    ensure(scale > 0.0, "points", || "efficiencies are not positive".into())?;
    let background = (eps_r / scale).ln().max(0.0);
    Ok(LossFit {
        background,
        rephasing_efficiency: eps_r,
        scale: eps_r * (-background).exp(),
    })
}

/// Gain in dB from the window energy of an amplified and a reference record.
pub fn measure_gain(with_medium: &TimeTrace, without_medium: &TimeTrace, window: &WindowSpec) -> Result<f64> {
    let energy = |t: &TimeTrace| -> Result<f64> {
        ensure(
            window.start >= 0.0 && window.end() <= t.duration() + 0.5 / t.sample_rate,
            "window",
            || format!("window [{}, {}] is outside the trace", window.start, window.end()),
        )?;
        Ok(t.window(window).iter().map(|z| z.norm_sqr()).sum::<f64>() / t.sample_rate)
    };
    let e_with = energy(with_medium)?;
    let e_ref = energy(without_medium)?;
    if e_ref <= 0.0 {
        return Err(Error::invalid("without_medium", "reference window has zero energy"));
    }
    Ok(10.0 * (e_with / e_ref).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::WindowKind;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn db_conversion() {
        assert_eq!(gain_db_to_alpha_l(0.0), 0.0);
        assert!((gain_db_to_alpha_l(36.0) - 8.289306334778567).abs() < 1e-12);
        assert!((gain_db_to_alpha_l(7.0) - 1.6118095650958319).abs() < 1e-12);
        assert!((alpha_l_to_gain_db(gain_db_to_alpha_l(13.0)) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn ledingham_values() {
        assert_eq!(ledingham_efficiency(0.0), 0.0);
        assert!(ledingham_efficiency(1e-12) < 1e-11);
        let direct = 8.0 * 0.5f64.sinh().powi(2) / (2.0 * 1f64.exp() - 2.0);
        assert!((ledingham_formula(1.0) - direct).abs() < 1e-15);
        assert!((ledingham_efficiency(1.0) - 0.6321205588285577).abs() < 1e-12);
        assert!((ledingham_efficiency(8.289306334778567) - 0.99975).abs() < 1e-5);
    }

    #[test]
    fn fit_recovers_factorised_scale() {
        let f = fit_background(&[(7.0, 0.17), (36.0, 0.81)], 0.84 * 0.84).unwrap();
        assert!((f.scale - 0.5766).abs() < 1e-3, "{f:?}");
        assert!((f.background - 0.2019).abs() < 2e-3, "{f:?}");
    }

    #[test]
    fn measure_gain_basics() {
        let s: Vec<_> = (0..100).map(|k| Complex64::new((k as f64).sin(), 0.3)).collect();
        let w = WindowSpec::new(WindowKind::Input, 0.1, 0.5);
        let a = TimeTrace::new(100.0, s.clone(), 0.0, vec![], 0).unwrap();
        assert_eq!(measure_gain(&a, &a, &w).unwrap(), 0.0);
        let b = TimeTrace::new(100.0, s.iter().map(|z| z * 10.0).collect(), 0.0, vec![], 0).unwrap();
        assert!((measure_gain(&b, &a, &w).unwrap() - 20.0).abs() < 1e-12);
        let z = TimeTrace::new(100.0, vec![Complex64::default(); 100], 0.0, vec![], 0).unwrap();
        assert!(measure_gain(&a, &z, &w).is_err());
    }

    #[test]
    fn mbe_zero_gain_passes_input_unchanged() {
        let setup = CurveSetup::default();
        let r = setup.run(0.0, 0.0, 1.0).unwrap();
        assert_eq!(r.efficiency, 0.0);
        assert!(r.gain_db_measured.abs() < 1e-9);
        assert!(r.echo_energy < 1e-20);
    }

    #[test]
    fn mbe_coarse_step_reports_suggestion() {
        let mut cfg = MbeConfig::new(2.0, 0.0, 1.0);
        cfg.time_step = 5.0;
        match cfg.validate() {
            Err(Error::StepSize { suggested, .. }) => assert!(suggested < 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mbe_matches_closed_form_and_factorises() {
        let setup = CurveSetup::default();
        let r = setup.run(alpha_l_to_gain_db(1.6), 0.0, 1.0).unwrap();
        let want = ledingham_efficiency(1.6);
        assert!((r.efficiency / want - 1.0).abs() < 0.01, "{} vs {want}", r.efficiency);
        assert!((r.gain_db_measured - alpha_l_to_gain_db(1.6)).abs() < 0.1);
        let lossy = setup.run(alpha_l_to_gain_db(1.6), 0.2, 0.7).unwrap();
        let expect = want * 0.7 * (-0.2f64).exp();
        assert!((lossy.efficiency / expect - 1.0).abs() < 0.01, "{} vs {expect}", lossy.efficiency);
    }

    #[test]
    fn mbe_step_halving_converged() {
        let mut setup = CurveSetup::default();
        let a = setup.run(alpha_l_to_gain_db(2.0), 0.0, 1.0).unwrap().efficiency;
        setup.mbe.time_step /= 2.0;
        setup.mbe.space_steps *= 2;
        let b = setup.run(alpha_l_to_gain_db(2.0), 0.0, 1.0).unwrap().efficiency;
        assert!((a / b - 1.0).abs() < 2e-3, "{a} vs {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn formula_identity(x in 1e-6f64..20.0) {
            let a = ledingham_formula(x);
            let b = 1.0 - (-x).exp();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&ledingham_efficiency(x)));
        }

        #[test]
        fn strictly_increasing(x in 1e-6f64..15.0, dx in 1e-3f64..5.0) {
            prop_assert!(ledingham_efficiency(x + dx) > ledingham_efficiency(x));
        }
    }
}
