//! Figure data regeneration. Each figure applies a preset on top of the
//! experiment configuration, runs the pipeline, and writes CSV and JSON.

use clap::{Args, ValueEnum};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use raselab::analysis::correlation::{pearson, rase_transform};
use raselab::analysis::insep::{InsepOptions, Moments};
use raselab::analysis::{prepare, MultiplexSpec};
use raselab::config::ExperimentConfig;
use raselab::decay::{
    fit_decay, gradient_lineshape, near_center_profile, storage_time_fit, write_time_voigt, DecayFit, DecayModel,
    WRITE_TIME_NO_GRADIENT, STORAGE_CLOCK, WRITE_CLOCK,
};
use raselab::gain::efficiency_curve;
use raselab::pipeline::{self, Synthetic};
use raselab::quantum::{synthesize_trace, OrthogonalMix, SynthParams};
use raselab::seed::{shot_seed, sub_rng};
use raselab::sequence::build_rase;
use raselab::trace::WindowKind;

use crate::commands::{
    load_config, parse_gains, write_corr, write_insep, write_multiplex, DEFAULT_BACKGROUND, DEFAULT_REPHASE,
};
use crate::output::Outputs;
use crate::{CliError, CliResult, RunArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Time trace and RASE/ASE overlay.
    Fig3,
    /// Write-time decay with the field gradient.
    Fig4,
    /// Storage-time decay.
    Fig5,
    /// Efficiency against gain.
    Fig6,
    /// Correlations and their gain dependence.
    Fig7,
    /// Polarization suppression and mixing bound.
    Fig8,
    /// Temporal multiplexing.
    Fig9,
    /// Inseparability.
    Fig10,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    fig: Figure,
    #[command(flatten)]
    run: RunArgs,
}

/// Effective settings of one reproduction, hashed into the run manifest.
#[derive(Serialize)]
struct FigureConfig<'a, E: Serialize> {
    figure: Figure,
    experiment: &'a ExperimentConfig,
    synthesis: Option<&'a SynthParams>,
    shots: usize,
    extra: E,
}

const HIGH_GAIN_DB: f64 = 36.0;
const DECAY_NOISE: f64 = 0.01;

pub fn reproduce(a: ReproduceArgs) -> CliResult<()> {
    let cfg = load_config(&a.run)?;
    let shots = |default: usize| a.run.shots.map_or(default, |n| n as usize);
    let name = format!("reproduce {}", serde_json::to_value(a.fig).map_err(|e| CliError::Runtime(e.to_string()))?.as_str().unwrap_or(""));
    let mut o = Outputs::create(&a.run.out, &name)?;
    let seed = cfg.base_seed;
    match a.fig {
        Figure::Fig3 => {
            let p = SynthParams {
                gain_db: HIGH_GAIN_DB,
                ..SynthParams::from_config(&cfg)
            };
            fig3(&mut o, &cfg, &p)?;
            o.finish(&name, &fc(a.fig, &cfg, Some(&p), 1, ()), seed)?;
        }
        Figure::Fig4 => {
            fig4(&mut o, seed)?;
            o.finish(&name, &fc(a.fig, &cfg, None, 0, DECAY_NOISE), seed)?;
        }
        Figure::Fig5 => {
            fig5(&mut o, seed)?;
            o.finish(&name, &fc(a.fig, &cfg, None, 0, DECAY_NOISE), seed)?;
        }
        Figure::Fig6 => {
            let gains = parse_gains("4:36:2")?;
            let pts = efficiency_curve(&gains, DEFAULT_BACKGROUND, DEFAULT_REPHASE)?;
            let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.gain_db, p.eff_mbe, p.eff_ledingham]).collect();
            o.write_csv("efficiency.csv", &["gain_db", "eff_mbe", "eff_ledingham"], &rows)?;
            let peak = pts.iter().map(|p| p.eff_mbe).fold(0.0, f64::max);
            o.write_json(
                "efficiency.json",
                &serde_json::json!({
                    "background": DEFAULT_BACKGROUND,
                    "rephasing_efficiency": DEFAULT_REPHASE,
                    "peak_eff_mbe": peak,
                    "points": pts,
                }),
            )?;
            o.finish(&name, &fc(a.fig, &cfg, None, 0, (DEFAULT_BACKGROUND, DEFAULT_REPHASE)), seed)?;
        }
        Figure::Fig7 => {
            let n = shots(500);
            let p = SynthParams {
                gain_db: 20.0,
                ..SynthParams::from_config(&cfg)
            };
            fig7(&mut o, &cfg, &p, n)?;
            o.finish(&name, &fc(a.fig, &cfg, Some(&p), n, (FIG7_SWEEP, CORRELATION_CUTOFF_KHZ)), seed)?;
        }
        Figure::Fig8 => {
            let n = shots(400);
            let p = SynthParams {
                gain_db: HIGH_GAIN_DB,
                polarization: Some(OrthogonalMix::default()),
                ..SynthParams::from_config(&cfg)
            };
            let seq = build_rase(cfg.t_a, cfg.t_b, 1.0)?;
            let al = Synthetic::new(&seq, &p, seed, n)?;
            let or = al.clone().orthogonal();
            let m = pipeline::polarization_run(&al, &or, cfg.detection.lpf_cutoff)?;
            o.write_json("polarization.json", &m)?;
            o.finish(&name, &fc(a.fig, &cfg, Some(&p), n, ()), seed)?;
        }
        Figure::Fig9 => {
            let n = shots(500);
            let spec = MultiplexSpec::default();
            let p = SynthParams {
                gain_db: HIGH_GAIN_DB,
                recall_efficiency: 0.5,
                decay_reference: Some(0.0),
                analysis_window: spec.gap,
                vacuum_window: 40.0,
                ..SynthParams::from_config(&cfg)
            };
            let seq = build_rase(spec.gap + 2.0, cfg.t_b, 1.0)?;
            let src = Synthetic::new(&seq, &p, seed, n)?;
            let r = pipeline::multiplex_run(&src, MULTIPLEX_CUTOFF_KHZ, spec)?;
            write_multiplex(&mut o, &r)?;
            o.finish(&name, &fc(a.fig, &cfg, Some(&p), n, (spec, MULTIPLEX_CUTOFF_KHZ)), seed)?;
        }
        Figure::Fig10 => {
            let n = shots(cfg.n_shots as usize);
            let p = SynthParams::from_config(&cfg);
            let seq = build_rase(cfg.t_a, cfg.t_b, 1.0)?;
            let src = Synthetic::new(&seq, &p, seed, n)?;
            let opts = InsepOptions {
                seed,
                ..InsepOptions::default()
            };
            let r = pipeline::insep_run(&src, cfg.detection.lpf_cutoff, &opts)?;
            let model = (p.recall_efficiency, p.transmission, Moments::two_mode_squeezed(p.gain_db));
            write_insep(&mut o, &r, Some(model))?;
            o.finish(&name, &fc(a.fig, &cfg, Some(&p), n, opts), seed)?;
        }
    }
    Ok(())
}

pub const MULTIPLEX_CUTOFF_KHZ: f64 = 1000.0;
const FIG7_SWEEP: [f64; 5] = [10.0, 15.0, 20.0, 25.0, 30.0];
const FIG7_MAX_LAG: f64 = 10.0;
/// Wide enough that the filtered vacuum peak stays narrow next to the signal.
pub const CORRELATION_CUTOFF_KHZ: f64 = 2000.0;

fn fc<'a, E: Serialize>(
    figure: Figure,
    experiment: &'a ExperimentConfig,
    synthesis: Option<&'a SynthParams>,
    shots: usize,
    extra: E,
) -> FigureConfig<'a, E> {
    FigureConfig {
        figure,
        experiment,
        synthesis,
        shots,
        extra,
    }
}

fn fig3(o: &mut Outputs, cfg: &ExperimentConfig, p: &SynthParams) -> CliResult<()> {
    let seq = build_rase(cfg.t_a, cfg.t_b, 1.0)?;
    let (raw, inj) = synthesize_trace(&seq, p, shot_seed(cfg.base_seed, 0))?;
    let bb = prepare(&raw, cfg.detection.lpf_cutoff)?;
    let rows: Vec<Vec<f64>> = (0..raw.samples.len())
        .map(|i| {
            vec![
                raw.time(i),
                raw.samples[i].re,
                raw.samples[i].im,
                bb.samples[i].re,
                bb.samples[i].im,
            ]
        })
        .collect();
    o.write_csv("trace.csv", &["t_us", "raw_i", "raw_q", "bb_i", "bb_q"], &rows)?;
    o.write_json("windows.json", &raw.windows)?;

    let a = bb.window(bb.first_window(WindowKind::Ase)?);
    let r = bb.window(bb.first_window(WindowKind::Rase)?);
    // amplitude recall factor; the decay reference sits at the window centre
    let overlay = rase_transform(r, p.recall_efficiency.sqrt(), p.write_time, std::f64::consts::PI, 0.0)?;
    let dt = 1.0 / bb.sample_rate;
    let rows: Vec<Vec<f64>> = a
        .iter()
        .zip(&overlay)
        .enumerate()
        .map(|(i, (x, y))| vec![i as f64 * dt, x.re, x.im, y.re, y.im])
        .collect();
    o.write_csv("overlay.csv", &["t_us", "ase_i", "ase_q", "rase_i", "rase_q"], &rows)?;
    let re = |v: &[raselab::Complex64]| v.iter().map(|z| z.re).collect::<Vec<_>>();
    let im = |v: &[raselab::Complex64]| v.iter().map(|z| z.im).collect::<Vec<_>>();
    o.write_json(
        "overlay.json",
        &serde_json::json!({
            "pearson_i": pearson(&re(a), &re(&overlay)),
            "pearson_q": pearson(&im(a), &im(&overlay)),
            "injected_jitter_us": inj.jitter,
            "injected_phase_rad": inj.phase,
        }),
    )?;
    Ok(())
}

fn noisy(model: &[f64], seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = sub_rng(seed, stream);
    model
        .iter()
        .map(|m| {
            let n: f64 = rng.sample(StandardNormal);
            m * (1.0 + DECAY_NOISE * n)
        })
        .collect()
}

#[derive(Serialize)]
struct DecayReport {
    label: &'static str,
    fit: DecayFit,
}

fn fig4(o: &mut Outputs, seed: u64) -> CliResult<()> {
    let voigt = write_time_voigt();
    // delay 2·t_a + t_b with t_b = 0.1 and t_a from 10 to 400 µs
    let delays: Vec<f64> = (1..=40).map(|k| 2.0 * 10.0 * k as f64 + 0.1).collect();
    let profiles = [("near", near_center_profile()), ("offset_3mm", near_center_profile().shifted(3.0))];
    let mut cols = vec![delays.clone()];
    let mut header = vec!["delay_us".to_string()];
    let mut reports = Vec::new();
    for (k, (label, prof)) in profiles.iter().enumerate() {
        let model = DecayModel::with_gradient(gradient_lineshape(prof, 512)?, WRITE_CLOCK);
        let truth = model.envelope(&voigt, &delays);
        let data = noisy(&truth, seed, k as u64);
        let pts: Vec<(f64, f64)> = delays.iter().copied().zip(data.iter().copied()).collect();
        let fit = fit_decay(&pts, &model)?;
        let amp = fit_amplitude(&pts, &model.envelope(&fit.voigt, &delays));
        cols.push(data);
        cols.push(model.envelope(&fit.voigt, &delays).into_iter().map(|e| amp * e).collect());
        header.push(format!("amp_{label}"));
        header.push(format!("fit_{label}"));
        reports.push(DecayReport { label, fit });
    }
    cols.push(DecayModel::voigt_only(WRITE_CLOCK).envelope(&voigt, &delays));
    header.push("voigt_only".into());
    let rows = transpose(&cols);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    o.write_csv("write_time.csv", &h, &rows)?;
    let ratio = reports[0].fit.t_1e / WRITE_TIME_NO_GRADIENT;
    o.write_json(
        "write_time.json",
        &serde_json::json!({
            "fits": reports,
            "t_1e_without_gradient": WRITE_TIME_NO_GRADIENT,
            "near_to_no_gradient_ratio": ratio,
        }),
    )?;
    Ok(())
}

fn fig5(o: &mut Outputs, seed: u64) -> CliResult<()> {
    let truth_fit = storage_time_fit();
    let delays: Vec<f64> = (0..=40).map(|k| 2.5 * k as f64).collect();
    let model = DecayModel::voigt_only(STORAGE_CLOCK);
    let truth = model.envelope(&truth_fit.voigt, &delays);
    let data = noisy(&truth, seed, 10);
    let pts: Vec<(f64, f64)> = delays.iter().copied().zip(data.iter().copied()).collect();
    let fit = fit_decay(&pts, &model)?;
    let env = model.envelope(&fit.voigt, &delays);
    let amp = fit_amplitude(&pts, &env);
    let rows = transpose(&[delays, data, env.into_iter().map(|e| amp * e).collect()]);
    o.write_csv("storage_time.csv", &["delay_us", "amplitude", "fit"], &rows)?;
    o.write_json("storage_time.json", &DecayReport { label: "storage", fit })?;
    Ok(())
}

fn fig7(o: &mut Outputs, cfg: &ExperimentConfig, p: &SynthParams, n: usize) -> CliResult<()> {
    let seq = build_rase(cfg.t_a, cfg.t_b, 1.0)?;
    let cutoff = CORRELATION_CUTOFF_KHZ;
    let src = Synthetic::new(&seq, p, cfg.base_seed, n)?;
    let s = pipeline::correlation_run(&src, cutoff, FIG7_MAX_LAG)?;
    write_corr(o, "", &s)?;
    let eta_amp = p.recall_efficiency.sqrt();
    let rows: Vec<Vec<f64>> = s
        .auto_a_subtracted
        .lags
        .iter()
        .zip(&s.auto_a_subtracted.values)
        .map(|(l, v)| vec![*l, eta_amp * v.norm()])
        .collect();
    o.write_csv("expected_cross.csv", &["lag_us", "expected_abs"], &rows)?;

    let per = (n / FIG7_SWEEP.len()).max(2);
    let mut sweep = Vec::new();
    for (k, g) in FIG7_SWEEP.iter().enumerate() {
        let pg = SynthParams { gain_db: *g, ..p.clone() };
        let src = Synthetic::new(&seq, &pg, shot_seed(cfg.base_seed, 1_000_000 + k as u64), per)?;
        let sg = pipeline::correlation_run(&src, cutoff, FIG7_MAX_LAG)?;
        sweep.push(vec![
            *g,
            sg.cross.at_zero().norm(),
            sg.cross.std_err_at_zero(),
            eta_amp * sg.auto_a_subtracted.at_zero().norm(),
        ]);
    }
    o.write_csv("gain_sweep.csv", &["gain_db", "cross_abs", "cross_err", "expected_abs"], &sweep)?;
    Ok(())
}

fn fit_amplitude(pts: &[(f64, f64)], env: &[f64]) -> f64 {
    let num: f64 = pts.iter().zip(env).map(|((_, y), e)| y * e).sum();
    let den: f64 = env.iter().map(|e| e * e).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn transpose(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols.iter().map(Vec::len).min().unwrap_or(0);
    (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}
