//! Replays the checked-in fuzz corpus through every parser. Files named
//! `valid*`, `default*`, `near_center*` or `shifted*` must parse; the rest
//! must be rejected without panicking.

use std::fs;
use std::path::{Path, PathBuf};

use raselab::config::ExperimentConfig;
use raselab::decay::{parse_decay_csv, FieldProfile};
use raselab::scheme::LevelScheme;
use raselab::trace::{parse_trace_csv, ShotManifest, TraceMeta};

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn should_parse(p: &Path) -> bool {
    let name = p.file_name().unwrap().to_string_lossy();
    ["valid", "default", "near_center", "shifted"].iter().any(|s| name.starts_with(s))
}

fn replay<T, E: std::fmt::Debug>(target: &str, parse: impl Fn(&str) -> Result<T, E>) {
    for (p, text) in corpus(target) {
        let r = parse(&text);
        assert_eq!(r.is_ok(), should_parse(&p), "{}: {:?}", p.display(), r.err());
    }
}

#[test]
fn trace_csv() {
    replay("trace_csv", |t| parse_trace_csv(t, None));
}

#[test]
fn trace_meta() {
    replay("trace_meta", TraceMeta::from_json);
}

#[test]
fn shot_manifest() {
    replay("shot_manifest", ShotManifest::from_json);
}

#[test]
fn experiment_config() {
    replay("experiment_config", ExperimentConfig::from_json);
}

#[test]
fn decay_csv() {
    replay("decay_csv", parse_decay_csv);
}

#[test]
fn field_profile() {
    replay("field_profile", FieldProfile::from_json);
}

#[test]
fn level_scheme() {
    replay("level_scheme", |t| {
        serde_json::from_str::<LevelScheme>(t)
            .map_err(|e| e.to_string())
            .and_then(|s| s.validate().map(|_| s).map_err(|e| e.to_string()))
    });
}
