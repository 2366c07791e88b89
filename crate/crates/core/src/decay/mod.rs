//! Lineshapes, decay envelopes and decay fitting.

mod fit;
mod lineshape;
mod voigt;

pub use fit::{
    fit_decay, solve_voigt_split, total_envelope, DecayFit, DecayModel, STORAGE_CLOCK, WRITE_CLOCK,
};
pub use lineshape::{envelope_from_lineshape, gradient_lineshape, near_center_profile, FieldProfile, Lineshape};
pub use voigt::{faddeeva, voigt_profile, VoigtParams};

use crate::error::{Error, Result};

/// Spin-dephasing linewidth seen in write-time scans, kHz.
pub const WRITE_LINEWIDTH: f64 = 4.3;
/// Write-time without the field gradient, µs.
pub const WRITE_TIME_NO_GRADIENT: f64 = 165.0;
/// Measured write-time including the gradient, µs.
pub const WRITE_TIME_MEASURED: f64 = 157.8;
/// Effective ground-state linewidth in storage-time scans, kHz.
pub const STORAGE_LINEWIDTH: f64 = 14.8;
pub const STORAGE_TIME: f64 = 25.1;

/// Voigt split reproducing the storage-time decay.
pub fn storage_time_fit() -> DecayFit {
    let model = DecayModel::voigt_only(STORAGE_CLOCK);
    let voigt = solve_voigt_split(STORAGE_LINEWIDTH, STORAGE_TIME, &model).expect("storage split solvable");
    DecayFit {
        t_1e: STORAGE_TIME,
        voigt,
        gradient_contribution: 0.0,
        residual_rms: 0.0,
    }
}

/// Voigt split reproducing the gradient-free write-time.
pub fn write_time_voigt() -> VoigtParams {
    let model = DecayModel::voigt_only(WRITE_CLOCK);
    solve_voigt_split(WRITE_LINEWIDTH, WRITE_TIME_NO_GRADIENT, &model).expect("write split solvable")
}

/// Parse a decay CSV with header `delay_us,amplitude`.
pub fn parse_decay_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse("header", e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["delay_us", "amplitude"] {
        return Err(Error::parse("header", format!("expected delay_us,amplitude, found {}", cols.join(","))));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(format!("row {}", row + 1), e.to_string()))?;
        let get = |j: usize, name: &str| -> Result<f64> {
            let raw = rec.get(j).unwrap_or("");
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(format!("row {} column {name}", row + 1), format!("bad value {raw:?}"))),
            }
        };
        out.push((get(0, "delay_us")?, get(1, "amplitude")?));
    }
    Ok(out)
}
