use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use raselab::analysis::insep::{insep_model, squeezing_db, InsepOptions, InsepResult, Moments};
use raselab::analysis::{CorrelationResult, MultiplexSpec};
use raselab::config::ExperimentConfig;
use raselab::decay::{self, gradient_lineshape, parse_decay_csv, DecayModel, FieldProfile, STORAGE_CLOCK, WRITE_CLOCK};
use raselab::gain::efficiency_curve;
use raselab::pipeline::{self, CorrelationSummary, ShotDir, ShotSource, Synthetic};
use raselab::quantum::{OrthogonalMix, SynthParams};
use raselab::scheme::{default_level_scheme, LevelScheme};
use raselab::sequence::{build_i4le, build_rase, capacity_with, memory_bandwidth, to_nlpe, CapacityStrategy, PulseSequence};
use raselab::trace::{save_trace, shot_file_name, sidecar_path, ShotEntry, ShotManifest, MANIFEST_FILE};

use crate::output::{config_hash, Outputs};
use crate::{CliError, CliResult, Clock, RunArgs};

/// Closed-form-fit background absorption used when `--bg` is omitted.
pub const DEFAULT_BACKGROUND: f64 = 0.2019;
/// Rephasing efficiency used when `--rephase` is omitted (0.84²).
pub const DEFAULT_REPHASE: f64 = 0.7056;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Configuration from `--config` (or defaults) with seed and shot overrides.
pub fn load_config(run: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(p) => ExperimentConfig::from_json(&read_text(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = run.seed {
        cfg.base_seed = s;
    }
    if let Some(n) = run.shots {
        cfg.n_shots = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqKind {
    Rase,
    I4le,
    Nlpe,
}

#[derive(Debug, Args, Serialize)]
pub struct SequenceArgs {
    #[arg(long, value_enum, default_value = "rase")]
    kind: SeqKind,
    /// µs between πi (or the input) and π1.
    #[arg(long, default_value_t = 20.0)]
    t_a: f64,
    /// µs between π1 and π2.
    #[arg(long, default_value_t = 0.1)]
    t_b: f64,
    /// Area of πi in units of π.
    #[arg(long, default_value_t = 1.0)]
    inversion_area: f64,
    /// Area of the I4LE input in units of π.
    #[arg(long, default_value_t = 1e-4)]
    input_area: f64,
    /// Timeline width in characters.
    #[arg(long, default_value_t = 72)]
    width: usize,
    /// Also write sequence.json and timeline.txt into this directory.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

pub fn build_sequence(kind: SeqKind, t_a: f64, t_b: f64, inversion: f64, input: f64) -> CliResult<PulseSequence> {
    Ok(match kind {
        SeqKind::Rase => build_rase(t_a, t_b, inversion)?,
        SeqKind::I4le => build_i4le(t_a, t_b, inversion, input)?,
        SeqKind::Nlpe => to_nlpe(&build_i4le(t_a, t_b, inversion, input)?),
    })
}

pub fn sequence(a: SequenceArgs) -> CliResult<()> {
    let seq = build_sequence(a.kind, a.t_a, a.t_b, a.inversion_area, a.input_area)?;
    let json = serde_json::to_string_pretty(&seq.events).map_err(|e| CliError::Runtime(e.to_string()))?;
    let timeline = seq.timeline(a.width);
    println!("{json}");
    println!("{timeline}");
    if let Some(dir) = &a.out {
        let mut o = Outputs::create(dir, "sequence")?;
        o.write_json("sequence.json", &seq)?;
        o.write_text("timeline.txt", &format!("{timeline}\n"))?;
        o.finish("sequence", &a, 0)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the orthogonal-polarization records instead of the aligned ones.
    #[arg(long)]
    orthogonal: bool,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    experiment: &'a ExperimentConfig,
    synthesis: &'a SynthParams,
}

pub fn synth_params(cfg: &ExperimentConfig, orthogonal: bool) -> SynthParams {
    SynthParams {
        polarization: orthogonal.then(OrthogonalMix::default),
        ..SynthParams::from_config(cfg)
    }
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&a.run)?;
    let p = synth_params(&cfg, a.orthogonal);
    let seq = build_rase(cfg.t_a, cfg.t_b, 1.0)?;
    let mut src = Synthetic::new(&seq, &p, cfg.base_seed, cfg.n_shots as usize)?;
    if a.orthogonal {
        src = src.orthogonal();
    }
    let conf = SimulateConfig {
        experiment: &cfg,
        synthesis: &p,
    };
    let mut o = Outputs::create(&a.run.out, "simulate")?;
    write_shot_set(&mut o, &src, cfg.base_seed, Some(config_hash(&conf)?))?;
    o.finish("simulate", &conf, cfg.base_seed)?;
    Ok(())
}

/// Stream a shot source to disk as a shot-set directory.
pub fn write_shot_set(o: &mut Outputs, src: &dyn ShotSource, base_seed: u64, hash: Option<String>) -> CliResult<()> {
    let dir = o.dir().to_path_buf();
    let shots = (0..src.len())
        .into_par_iter()
        .map(|k| {
            let t = src.shot(k)?;
            let name = shot_file_name(k as u64);
            save_trace(&t, &dir.join(&name))?;
            Ok(ShotEntry {
                index: k as u64,
                seed: t.seed,
                file: name,
            })
        })
        .collect::<Result<Vec<_>, raselab::Error>>()?;
    for s in &shots {
        let p = dir.join(&s.file);
        o.record(&sidecar_path(&p));
        o.record(&p);
    }
    let m = ShotManifest {
        base_seed,
        config_hash: hash,
        shots,
    };
    o.write_json(MANIFEST_FILE, &m)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EffCurveArgs {
    /// Gains in dB as start:stop:step or a comma-separated list.
    #[arg(long, default_value = "4:36:2")]
    gains: String,
    /// Background absorption α_bg·L.
    #[arg(long, default_value_t = DEFAULT_BACKGROUND)]
    bg: f64,
    /// Rephasing efficiency ε_r.
    #[arg(long, default_value_t = DEFAULT_REPHASE)]
    rephase: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

pub fn parse_gains(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Validation(format!("--gains {spec:?}: expected start:stop:step or a list"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (a, b, s) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(s > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| a + k as f64 * s).collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

pub fn eff_curve(a: EffCurveArgs) -> CliResult<()> {
    let gains = parse_gains(&a.gains)?;
    let pts = efficiency_curve(&gains, a.bg, a.rephase)?;
    let (mut o, name) = Outputs::for_file(&a.out, "eff-curve")?;
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.gain_db, p.eff_mbe, p.eff_ledingham]).collect();
    o.write_csv(&name, &["gain_db", "eff_mbe", "eff_ledingham"], &rows)?;
    o.finish("eff-curve", &a, 0)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct FitDecayArgs {
    /// CSV with header delay_us,amplitude.
    #[arg(long)]
    data: PathBuf,
    /// Field profile JSON; adds the fixed gradient lineshape to the model.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Write-time scans (delay 2t_a + t_b) or storage-time scans (delay t_b).
    #[arg(long, value_enum, default_value = "write")]
    #[serde(skip)]
    clock: Clock,
    /// Slices used to histogram the gradient lineshape.
    #[arg(long, default_value_t = 512)]
    slices: usize,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitDecayConfig<'a> {
    data: &'a [(f64, f64)],
    field: Option<FieldProfile>,
    clock: f64,
    slices: usize,
}

pub fn clock_value(c: Clock) -> f64 {
    match c {
        Clock::Write => WRITE_CLOCK,
        Clock::Storage => STORAGE_CLOCK,
    }
}

pub fn fit_decay_cmd_model(field: Option<&FieldProfile>, clock: f64, slices: usize) -> CliResult<DecayModel> {
    Ok(match field {
        Some(f) => DecayModel::with_gradient(gradient_lineshape(f, slices)?, clock),
        None => DecayModel::voigt_only(clock),
    })
}

pub fn fit_decay(a: FitDecayArgs) -> CliResult<()> {
    let pts = parse_decay_csv(&read_text(&a.data)?)?;
    let field = match &a.field {
        Some(p) => Some(FieldProfile::from_json(&read_text(p)?)?),
        None => None,
    };
    let clock = clock_value(a.clock);
    let model = fit_decay_cmd_model(field.as_ref(), clock, a.slices)?;
    let fit = decay::fit_decay(&pts, &model)?;
    let (mut o, name) = Outputs::for_file(&a.out, "fit-decay")?;
    o.write_json(&name, &fit)?;
    let conf = FitDecayConfig {
        data: &pts,
        field,
        clock,
        slices: a.slices,
    };
    o.finish("fit-decay", &conf, 0)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    /// Write-time in µs.
    #[arg(long, default_value_t = 157.8)]
    write_time: f64,
    /// Level-scheme JSON; the built-in scheme is used when omitted.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Also write capacity.json into this directory.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct CapacityReport {
    pub bandwidth_mhz: f64,
    pub write_time_us: f64,
    pub strategy: CapacityStrategy,
    pub capacity: u64,
}

pub fn capacity_report(scheme: &LevelScheme, write_time: f64) -> CliResult<CapacityReport> {
    scheme.validate()?;
    let b = memory_bandwidth(scheme);
    let strategy = CapacityStrategy::default();
    Ok(CapacityReport {
        bandwidth_mhz: b,
        write_time_us: write_time,
        strategy,
        capacity: capacity_with(strategy, b, write_time)?,
    })
}

pub fn capacity(a: CapacityArgs) -> CliResult<()> {
    let scheme = match &a.scheme {
        Some(p) => serde_json::from_str::<LevelScheme>(&read_text(p)?)
            .map_err(|e| CliError::Validation(format!("level scheme: {e}")))?,
        None => default_level_scheme(),
    };
    let r = capacity_report(&scheme, a.write_time)?;
    println!("{}", serde_json::to_string_pretty(&r).map_err(|e| CliError::Runtime(e.to_string()))?);
    if let Some(dir) = &a.out {
        let mut o = Outputs::create(dir, "capacity")?;
        o.write_json("capacity.json", &r)?;
        o.finish("capacity", &(&a, &scheme), 0)?;
    }
    Ok(())
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Auto- and cross-correlations with vacuum subtraction.
    Corr(CorrArgs),
    /// Inseparability λ(b) with bootstrap errors.
    Insep(InsepArgs),
    /// Per-mode correlations of sub-windows and the time-bandwidth product.
    Multiplex(MultiplexArgs),
    /// Suppression and mode-mixing bound from aligned and orthogonal sets.
    Polarization(PolarizationArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShotsIn {
    /// Shot-set directory.
    #[arg(long)]
    shots: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Demodulation low-pass cutoff, kHz.
    #[arg(long)]
    cutoff: Option<f64>,
}

const DEFAULT_CUTOFF_KHZ: f64 = 280.0;

#[derive(Debug, Args, Serialize)]
pub struct CorrArgs {
    #[command(flatten)]
    io: ShotsIn,
    /// Largest lag, µs.
    #[arg(long, default_value_t = 10.0)]
    max_lag: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InsepArgs {
    #[command(flatten)]
    io: ShotsIn,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.001)]
    b_step: f64,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recall efficiency and transmission for the model curve.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    transmission: Option<f64>,
    #[arg(long)]
    gain_db: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct MultiplexArgs {
    #[command(flatten)]
    io: ShotsIn,
    #[arg(long, default_value_t = 0.5)]
    window_len: f64,
    #[arg(long, default_value_t = 2.0)]
    spacing: f64,
    #[arg(long, default_value_t = 160.0)]
    gap: f64,
    #[arg(long, default_value_t = 70)]
    n_modes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PolarizationArgs {
    /// Aligned-polarization shot set.
    #[arg(long)]
    aligned: PathBuf,
    /// Orthogonal-polarization shot set.
    #[arg(long)]
    orth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CUTOFF_KHZ)]
    cutoff: f64,
}

fn open_set(dir: &Path) -> CliResult<ShotDir> {
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Validation(format!("{} is not a shot-set directory", dir.display())));
    }
    let s = ShotDir::open(dir)?;
    if s.is_empty() {
        return Err(CliError::Validation(format!("{} holds no shots", dir.display())));
    }
    Ok(s)
}

pub fn corr_rows(s: &CorrelationSummary) -> Vec<Vec<f64>> {
    let c = |r: &CorrelationResult, i: usize| [r.values[i].re, r.values[i].im, r.values[i].norm()];
    (0..s.cross.lags.len())
        .map(|i| {
            let mut row = vec![s.cross.lags[i]];
            for r in [&s.auto_a, &s.auto_r, &s.cross, &s.auto_a_subtracted, &s.auto_r_subtracted, &s.vacuum] {
                row.extend(c(r, i));
            }
            row.push(s.cross.std_err[i]);
            row
        })
        .collect()
}

pub const CORR_HEADER: [&str; 20] = [
    "lag_us",
    "auto_a_re",
    "auto_a_im",
    "auto_a_abs",
    "auto_r_re",
    "auto_r_im",
    "auto_r_abs",
    "cross_re",
    "cross_im",
    "cross_abs",
    "auto_a_sub_re",
    "auto_a_sub_im",
    "auto_a_sub_abs",
    "auto_r_sub_re",
    "auto_r_sub_im",
    "auto_r_sub_abs",
    "vacuum_re",
    "vacuum_im",
    "vacuum_abs",
    "cross_std_err",
];

pub fn write_corr(o: &mut Outputs, prefix: &str, s: &CorrelationSummary) -> CliResult<()> {
    o.write_csv(&format!("{prefix}correlations.csv"), &CORR_HEADER, &corr_rows(s))?;
    o.write_json(&format!("{prefix}correlations.json"), s)?;
    Ok(())
}

/// λ(b) rows with the model curve and the bootstrap band.
pub fn insep_rows(r: &InsepResult, model: Option<(f64, f64, Moments)>) -> Vec<Vec<f64>> {
    r.b_grid
        .iter()
        .zip(&r.lambda)
        .map(|(&b, &l)| {
            let m = model.map_or(f64::NAN, |(eta, tr, mo)| insep_model(b, eta, tr, &mo));
            vec![b, l, m, r.sigma_min]
        })
        .collect()
}

#[derive(Serialize)]
pub struct InsepReport<'a> {
    pub lambda_min: f64,
    pub b_min: f64,
    pub sigma_min: f64,
    pub certainty_sigma: f64,
    pub squeezing_db: Option<f64>,
    pub n_shots: usize,
    pub vacuum_variance: f64,
    pub moments: Moments,
    pub model_lambda_min: Option<f64>,
    pub curve: &'a str,
}

pub fn write_insep(o: &mut Outputs, r: &InsepResult, model: Option<(f64, f64, Moments)>) -> CliResult<()> {
    let curve = "insep_curve.csv";
    o.write_csv(curve, &["b", "lambda", "lambda_model", "sigma_min"], &insep_rows(r, model))?;
    let report = InsepReport {
        lambda_min: r.lambda_min,
        b_min: r.b_min,
        sigma_min: r.sigma_min,
        certainty_sigma: r.certainty_sigma,
        squeezing_db: squeezing_db(r.lambda_min).ok(),
        n_shots: r.n_shots,
        vacuum_variance: r.vacuum_variance,
        moments: r.moments,
        model_lambda_min: model.map(|(e, t, m)| raselab::analysis::insep::model_minimum(e, t, &m).0),
        curve,
    };
    o.write_json("insep.json", &report)?;
    Ok(())
}

pub fn write_multiplex(o: &mut Outputs, r: &raselab::analysis::MultiplexResult) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = r
        .modes
        .iter()
        .map(|m| {
            vec![
                m.index as f64,
                m.storage_offset,
                m.auto_a,
                m.auto_a_err,
                m.cross,
                m.cross_err,
                m.relative,
                m.neighbor.unwrap_or(f64::NAN),
                m.neighbor_err.unwrap_or(f64::NAN),
                m.neighbor_z.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    o.write_csv(
        "multiplex_modes.csv",
        &[
            "mode",
            "storage_offset_us",
            "auto_a",
            "auto_a_err",
            "cross",
            "cross_err",
            "relative",
            "neighbor",
            "neighbor_err",
            "neighbor_z",
        ],
        &rows,
    )?;
    o.write_json("multiplex.json", r)?;
    Ok(())
}

fn cutoff_of(io: &ShotsIn) -> f64 {
    io.cutoff.unwrap_or(DEFAULT_CUTOFF_KHZ)
}

pub fn analyze(cmd: AnalyzeCmd) -> CliResult<()> {
    match cmd {
        AnalyzeCmd::Corr(a) => {
            let set = open_set(&a.io.shots)?;
            let s = pipeline::correlation_run(&set, cutoff_of(&a.io), a.max_lag)?;
            let mut o = Outputs::create(&a.io.out, "analyze corr")?;
            write_corr(&mut o, "", &s)?;
            o.finish("analyze corr", &(&a, &set.manifest), set.manifest.base_seed)?;
        }
        AnalyzeCmd::Insep(a) => {
            let set = open_set(&a.io.shots)?;
            let opts = InsepOptions {
                b_step: a.b_step,
                bootstrap: a.bootstrap,
                seed: a.seed,
            };
            let r = pipeline::insep_run(&set, cutoff_of(&a.io), &opts)?;
            let model = match (a.eta, a.transmission, a.gain_db) {
                (Some(e), Some(t), Some(g)) => Some((e, t, Moments::two_mode_squeezed(g))),
                (None, None, None) => None,
                _ => {
                    return Err(CliError::Validation(
                        "--eta, --transmission and --gain-db must be given together".into(),
                    ))
                }
            };
            let mut o = Outputs::create(&a.io.out, "analyze insep")?;
            write_insep(&mut o, &r, model)?;
            o.finish("analyze insep", &(&a, &set.manifest), set.manifest.base_seed)?;
        }
        AnalyzeCmd::Multiplex(a) => {
            let set = open_set(&a.io.shots)?;
            let spec = MultiplexSpec {
                window_len: a.window_len,
                spacing: a.spacing,
                gap: a.gap,
                n_modes: a.n_modes,
            };
            let r = pipeline::multiplex_run(&set, cutoff_of(&a.io), spec)?;
            let mut o = Outputs::create(&a.io.out, "analyze multiplex")?;
            write_multiplex(&mut o, &r)?;
            o.finish("analyze multiplex", &(&a, &set.manifest), set.manifest.base_seed)?;
        }
        AnalyzeCmd::Polarization(a) => {
            let al = open_set(&a.aligned)?;
            let or = open_set(&a.orth)?;
            let m = pipeline::polarization_run(&al, &or, a.cutoff)?;
            let mut o = Outputs::create(&a.out, "analyze polarization")?;
            o.write_json("polarization.json", &m)?;
            o.finish("analyze polarization", &(&a, &al.manifest, &or.manifest), al.manifest.base_seed)?;
        }
    }
    Ok(())
}
