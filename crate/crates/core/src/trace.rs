//! Complex-envelope IQ records and their on-disk format.
//!
//! A trace is stored as a CSV file with header `t_us,i,q` plus a JSON sidecar
//! holding the metadata. A shot set is a directory with a `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowKind {
    #[serde(rename = "ASE")]
    Ase,
    #[serde(rename = "RASE")]
    Rase,
    #[serde(rename = "vacuum")]
    Vacuum,
    #[serde(rename = "reference")]
    Reference,
    #[serde(rename = "input")]
    Input,
    #[serde(rename = "echo")]
    Echo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub start: f64,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_freq: Option<f64>,
}

impl WindowSpec {
    pub fn new(kind: WindowKind, start: f64, length: f64) -> Self {
        WindowSpec {
            kind,
            start,
            length,
            ref_freq: None,
        }
    }

    pub fn reference(start: f64, length: f64, freq: f64) -> Self {
        WindowSpec {
            kind: WindowKind::Reference,
            start,
            length,
            ref_freq: Some(freq),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.start.is_finite() && self.length.is_finite(), "window", || {
            "start and length must be finite".into()
        })?;
        ensure(self.length > 0.0, "window.length", || {
            format!("{:?} window has length {}", self.kind, self.length)
        })?;
        match (self.kind, self.ref_freq) {
            (WindowKind::Reference, Some(f)) if f.is_finite() => Ok(()),
            (WindowKind::Reference, _) => {
                Err(Error::invalid("window.ref_freq", "reference window needs a finite ref_freq"))
            }
            (_, Some(_)) => Err(Error::invalid(
                "window.ref_freq",
                format!("{:?} window must not carry ref_freq", self.kind),
            )),
            (_, None) => Ok(()),
        }
    }
}

/// A sampled complex envelope.
///
/// `het_freq` is the carrier the physical record was taken at; `mix_freq`
/// records how much of it has already been removed by digital
/// down-conversion, so the residual carrier sits at `het_freq - mix_freq`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub sample_rate: f64,
    pub samples: Vec<Complex64>,
    pub het_freq: f64,
    pub mix_freq: f64,
    pub windows: Vec<WindowSpec>,
    pub seed: u64,
}

impl TimeTrace {
    pub fn new(
        sample_rate: f64,
        samples: Vec<Complex64>,
        het_freq: f64,
        windows: Vec<WindowSpec>,
        seed: u64,
    ) -> Result<Self> {
        let t = TimeTrace {
            sample_rate,
            samples,
            het_freq,
            mix_freq: 0.0,
            windows,
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    /// Carrier frequency still present in `samples`.
    pub fn residual_carrier(&self) -> f64 {
        self.het_freq - self.mix_freq
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.sample_rate.is_finite() && self.sample_rate > 0.0,
            "sample_rate",
            || format!("must be positive, got {}", self.sample_rate),
        )?;
        ensure(!self.samples.is_empty(), "samples", || "trace is empty".into())?;
        ensure(
            self.het_freq.is_finite() && self.mix_freq.is_finite(),
            "het_freq",
            || "must be finite".into(),
        )?;
        let dur = self.duration();
        // Allow half a sample of slack for window edges quoted in µs.
        let slack = 0.5 / self.sample_rate;
        for w in &self.windows {
            w.validate()?;
            ensure(w.start >= -slack && w.end() <= dur + slack, "windows", || {
                format!(
                    "{:?} window [{}, {}] exceeds trace duration {dur}",
                    w.kind,
                    w.start,
                    w.end()
                )
            })?;
        }
        Ok(())
    }

    /// Sample index range covered by `w`, clamped to the record.
    pub fn range(&self, w: &WindowSpec) -> Range<usize> {
        let n = self.samples.len();
        let a = (w.start * self.sample_rate).round().max(0.0) as usize;
        let len = (w.length * self.sample_rate).round() as usize;
        a.min(n)..(a + len).min(n)
    }

    pub fn window(&self, w: &WindowSpec) -> &[Complex64] {
        &self.samples[self.range(w)]
    }

    pub fn windows_of(&self, kind: WindowKind) -> impl Iterator<Item = &WindowSpec> {
        self.windows.iter().filter(move |w| w.kind == kind)
    }

    pub fn first_window(&self, kind: WindowKind) -> Result<&WindowSpec> {
        self.windows_of(kind)
            .next()
            .ok_or_else(|| Error::invalid("windows", format!("trace has no {kind:?} window")))
    }

    pub fn meta(&self) -> TraceMeta {
        TraceMeta {
            sample_rate: self.sample_rate,
            het_freq: self.het_freq,
            mix_freq: self.mix_freq,
            windows: self.windows.clone(),
            seed: self.seed,
            n_samples: self.samples.len(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 48 + 16);
        s.push_str("t_us,i,q\n");
        for (k, z) in self.samples.iter().enumerate() {
            // `{}` on f64 prints the shortest string that parses back exactly.
            let _ = writeln!(s, "{},{},{}", self.time(k), z.re, z.im);
        }
        s
    }

    pub fn from_parts(meta: TraceMeta, samples: Vec<Complex64>) -> Result<Self> {
        ensure(samples.len() == meta.n_samples, "n_samples", || {
            format!("sidecar says {} samples, CSV has {}", meta.n_samples, samples.len())
        })?;
        let t = TimeTrace {
            sample_rate: meta.sample_rate,
            samples,
            het_freq: meta.het_freq,
            mix_freq: meta.mix_freq,
            windows: meta.windows,
            seed: meta.seed,
        };
        t.validate()?;
        Ok(t)
    }
}

/// Metadata stored next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub sample_rate: f64,
    pub het_freq: f64,
    #[serde(default)]
    pub mix_freq: f64,
    pub windows: Vec<WindowSpec>,
    pub seed: u64,
    pub n_samples: usize,
}

impl TraceMeta {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("trace metadata", e.to_string()))
    }
}

/// Parse the `t_us,i,q` body. If `sample_rate` is given the time column is
/// checked against it.
pub fn parse_trace_csv(text: &str, sample_rate: Option<f64>) -> Result<Vec<Complex64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["t_us", "i", "q"] {
        return Err(Error::parse("header", format!("expected t_us,i,q, found {}", cols.join(","))));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(format!("row {}", row + 1), e.to_string()))?;
        let field = |j: usize, name: &str| -> Result<f64> {
            let raw = rec
                .get(j)
                .ok_or_else(|| Error::parse(format!("row {} column {name}", row + 1), "missing"))?;
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::parse(format!("row {} column {name}", row + 1), format!("not a number: {raw:?}"))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(format!("row {} column {name}", row + 1), "not finite"))
            }
        };
        let t = field(0, "t_us")?;
        if let Some(sr) = sample_rate {
            let expect = out.len() as f64 / sr;
            if (t - expect).abs() > 1e-6 * (1.0 + expect.abs()) {
                return Err(Error::parse(
                    format!("row {} column t_us", row + 1),
                    format!("expected {expect}, found {t}"),
                ));
            }
        }
        out.push(Complex64::new(field(1, "i")?, field(2, "q")?));
    }
    Ok(out)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_trace(trace: &TimeTrace, path: &Path) -> Result<()> {
    trace.validate()?;
    fs::write(path, trace.to_csv()).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta = serde_json::to_string_pretty(&trace.meta()).expect("metadata serialises");
    fs::write(&side, meta).map_err(|e| Error::io(&side, e))
}

pub fn load_trace(path: &Path) -> Result<TimeTrace> {
    let side = sidecar_path(path);
    let meta_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta = TraceMeta::from_json(&meta_text)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples = parse_trace_csv(&text, Some(meta.sample_rate))?;
    TimeTrace::from_parts(meta, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotEntry {
    pub index: u64,
    pub seed: u64,
    pub file: String,
}

/// Index of a shot-set directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotManifest {
    pub base_seed: u64,
    #[serde(default)]
    pub config_hash: Option<String>,
    pub shots: Vec<ShotEntry>,
}

impl ShotManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: ShotManifest =
            serde_json::from_str(s).map_err(|e| Error::parse("manifest", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.shots {
            let p = Path::new(&s.file);
            ensure(
                !s.file.is_empty()
                    && p.components().all(|c| matches!(c, std::path::Component::Normal(_))),
                "manifest.shots.file",
                || format!("{:?} must be a relative path inside the shot directory", s.file),
            )?;
            ensure(seen.insert(s.index), "manifest.shots.index", || {
                format!("index {} listed twice", s.index)
            })?;
        }
        Ok(())
    }
}

pub fn shot_file_name(index: u64) -> String {
    format!("shot_{index:05}.csv")
}

/// Write traces as a shot set; returns every file written.
pub fn save_shot_set(
    dir: &Path,
    traces: &[TimeTrace],
    base_seed: u64,
    config_hash: Option<String>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(2 * traces.len() + 1);
    let mut shots = Vec::with_capacity(traces.len());
    for (k, t) in traces.iter().enumerate() {
        let name = shot_file_name(k as u64);
        let p = dir.join(&name);
        save_trace(t, &p)?;
        written.push(sidecar_path(&p));
        written.push(p);
        shots.push(ShotEntry {
            index: k as u64,
            seed: t.seed,
            file: name,
        });
    }
    let manifest = ShotManifest {
        base_seed,
        config_hash,
        shots,
    };
    let mp = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
    written.push(mp);
    Ok(written)
}

pub fn load_manifest(dir: &Path) -> Result<ShotManifest> {
    let mp = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    ShotManifest::from_json(&text)
}

pub fn load_shot_set(dir: &Path) -> Result<(ShotManifest, Vec<TimeTrace>)> {
    use rayon::prelude::*;
    let m = load_manifest(dir)?;
    let traces = m
        .shots
        .par_iter()
        .map(|s| {
            let t = load_trace(&dir.join(&s.file))?;
            ensure(t.seed == s.seed, "manifest.shots.seed", || {
                format!("{} has seed {}, manifest says {}", s.file, t.seed, s.seed)
            })?;
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, traces))
}
