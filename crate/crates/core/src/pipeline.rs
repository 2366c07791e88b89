//! Streaming runs over shot sets.
//!
//! Shots are produced, prepared and reduced in fixed-size chunks processed in
//! parallel, then the chunk results are merged in index order. No run holds
//! every record in memory, and results do not depend on the thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::correlation::{subtract_vacuum_autocorr, VacuumFit};
use crate::analysis::insep::{calibrate, inseparability, project, InsepOptions, InsepResult, ProjectedShot};
use crate::analysis::multiplex::{MultiplexAccumulator, MultiplexResult, MultiplexSpec};
use crate::analysis::polarization::{polarization_metrics, shot_powers, PolarizationMetrics, ShotPowers};
use crate::analysis::{prepare, CorrAccumulator, CorrelationKind, CorrelationResult};
use crate::error::{ensure, Result};
use crate::quantum::{synthesize_orthogonal, synthesize_trace, SynthParams};
use crate::seed::shot_seed;
use crate::sequence::PulseSequence;
use crate::trace::{load_manifest, load_trace, ShotManifest, TimeTrace, WindowKind};

const CHUNK: usize = 16;

/// Anything that can hand out shot `k` of a set on demand.
pub trait ShotSource: Sync {
    fn len(&self) -> usize;
    fn shot(&self, k: usize) -> Result<TimeTrace>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shots synthesised on demand; shot k uses `shot_seed(base_seed, k)`.
#[derive(Debug, Clone)]
pub struct Synthetic<'a> {
    pub seq: &'a PulseSequence,
    pub params: &'a SynthParams,
    pub base_seed: u64,
    pub n: usize,
    /// Produce the orthogonal-polarization record instead of the aligned one.
    pub orthogonal: bool,
}

impl<'a> Synthetic<'a> {
    pub fn new(seq: &'a PulseSequence, params: &'a SynthParams, base_seed: u64, n: usize) -> Result<Self> {
        params.validate()?;
        crate::quantum::layout(seq, params)?;
        Ok(Synthetic {
            seq,
            params,
            base_seed,
            n,
            orthogonal: false,
        })
    }

    pub fn orthogonal(self) -> Self {
        Synthetic {
            orthogonal: true,
            ..self
        }
    }
}

impl ShotSource for Synthetic<'_> {
    fn len(&self) -> usize {
        self.n
    }

    fn shot(&self, k: usize) -> Result<TimeTrace> {
        let seed = shot_seed(self.base_seed, k as u64);
        let (t, _) = if self.orthogonal {
            synthesize_orthogonal(self.seq, self.params, seed)?
        } else {
            synthesize_trace(self.seq, self.params, seed)?
        };
        Ok(t)
    }
}

/// A shot-set directory read lazily through its manifest.
#[derive(Debug, Clone)]
pub struct ShotDir {
    pub dir: PathBuf,
    pub manifest: ShotManifest,
}

impl ShotDir {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(ShotDir {
            dir: dir.to_path_buf(),
            manifest: load_manifest(dir)?,
        })
    }
}

impl ShotSource for ShotDir {
    fn len(&self) -> usize {
        self.manifest.shots.len()
    }

    fn shot(&self, k: usize) -> Result<TimeTrace> {
        let e = &self.manifest.shots[k];
        let t = load_trace(&self.dir.join(&e.file))?;
        ensure(t.seed == e.seed, "manifest.shots.seed", || {
            format!("{} has seed {}, manifest says {}", e.file, t.seed, e.seed)
        })?;
        Ok(t)
    }
}

/// Per-shot map, returned in shot order.
pub fn map_shots<T, F>(src: &dyn ShotSource, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TimeTrace) -> Result<T> + Sync,
{
    (0..src.len()).into_par_iter().map(|k| f(src.shot(k)?)).collect()
}

/// Fold shots into accumulators chunk by chunk and merge chunks in order.
pub fn fold_shots<A, I, F, M>(src: &dyn ShotSource, init: I, add: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> Result<A> + Sync,
    F: Fn(&mut A, TimeTrace) -> Result<()> + Sync,
    M: Fn(A, A) -> Result<A>,
{
    let n = src.len();
    let chunks: Vec<A> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = init()?;
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                add(&mut acc, src.shot(k)?)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    chunks.into_iter().try_fold(init()?, merge)
}

pub fn insep_run(src: &dyn ShotSource, cutoff_khz: f64, opts: &InsepOptions) -> Result<InsepResult> {
    let projected: Vec<ProjectedShot> = map_shots(src, |t| project(&prepare(&t, cutoff_khz)?))?;
    let cal = calibrate(&projected)?;
    inseparability(&cal.shots, &cal.vacuum, opts)
}

pub fn multiplex_run(src: &dyn ShotSource, cutoff_khz: f64, spec: MultiplexSpec) -> Result<MultiplexResult> {
    let acc = fold_shots(
        src,
        || MultiplexAccumulator::new(spec),
        |a, t| a.add(&prepare(&t, cutoff_khz)?),
        |a, b| a.merge(b),
    )?;
    acc.finish()
}

pub fn polarization_run(
    aligned: &dyn ShotSource,
    orth: &dyn ShotSource,
    cutoff_khz: f64,
) -> Result<PolarizationMetrics> {
    let a: Vec<ShotPowers> = map_shots(aligned, |t| shot_powers(&t, cutoff_khz))?;
    let o: Vec<ShotPowers> = map_shots(orth, |t| shot_powers(&t, cutoff_khz))?;
    polarization_metrics(&a, &o)
}

/// Ensemble correlations of a shot set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub auto_a: CorrelationResult,
    pub auto_r: CorrelationResult,
    pub cross: CorrelationResult,
    /// Auto-correlation of vacuum sub-windows as long as the analysis window.
    pub vacuum: CorrelationResult,
    pub auto_a_subtracted: CorrelationResult,
    pub auto_r_subtracted: CorrelationResult,
    pub vacuum_fit: VacuumFit,
    /// |C_X(0)| / |C_A(0)| after vacuum subtraction.
    pub cross_to_auto: f64,
}

struct CorrSet {
    a: CorrAccumulator,
    r: CorrAccumulator,
    x: CorrAccumulator,
    v: CorrAccumulator,
}

pub fn correlation_run(src: &dyn ShotSource, cutoff_khz: f64, max_lag: f64) -> Result<CorrelationSummary> {
    ensure(!src.is_empty(), "shots", || "empty shot set".into())?;
    let sr = src.shot(0)?.sample_rate;
    let init = || {
        Ok(CorrSet {
            a: CorrAccumulator::new(CorrelationKind::AutoA, sr, max_lag),
            r: CorrAccumulator::new(CorrelationKind::AutoR, sr, max_lag),
            x: CorrAccumulator::new(CorrelationKind::Cross, sr, max_lag),
            v: CorrAccumulator::new(CorrelationKind::AutoA, sr, max_lag),
        })
    };
    let acc = fold_shots(
        src,
        init,
        |s, t| {
            let p = prepare(&t, cutoff_khz)?;
            let a = p.window(p.first_window(WindowKind::Ase)?);
            let r = p.window(p.first_window(WindowKind::Rase)?);
            let v = p.window(p.first_window(WindowKind::Vacuum)?);
            ensure(v.len() >= a.len(), "windows", || "vacuum window is shorter than the analysis window".into())?;
            s.a.add_auto(a)?;
            s.r.add_auto(r)?;
            s.x.add_cross(a, r)?;
            for chunk in v.chunks_exact(a.len()) {
                s.v.add_auto(chunk)?;
            }
            Ok(())
        },
        |x, y| {
            Ok(CorrSet {
                a: x.a.merge(y.a)?,
                r: x.r.merge(y.r)?,
                x: x.x.merge(y.x)?,
                v: x.v.merge(y.v)?,
            })
        },
    )?;
    let auto_a = acc.a.finish()?;
    let auto_r = acc.r.finish()?;
    let cross = acc.x.finish()?;
    let vacuum = acc.v.finish()?;
    let (auto_a_subtracted, vacuum_fit) = subtract_vacuum_autocorr(&auto_a, &vacuum)?;
    let (auto_r_subtracted, _) = subtract_vacuum_autocorr(&auto_r, &vacuum)?;
    let cross_to_auto = cross.at_zero().norm() / auto_a_subtracted.at_zero().norm();
    Ok(CorrelationSummary {
        auto_a,
        auto_r,
        cross,
        vacuum,
        auto_a_subtracted,
        auto_r_subtracted,
        vacuum_fit,
        cross_to_auto,
    })
}
