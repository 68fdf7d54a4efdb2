//! Threshold calibration from pressing profiles.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use tactile_door::fmt_f64;
use tactile_door::tactile::{
    calibrate_thresholds, ArrayGeometry, Calibration, CalibrationError, CalibrationOptions, PressProfile,
};

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("profiles file is not valid: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn load_profiles(path: &Path) -> Result<Vec<PressProfile>, CalibrateError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Fits κ and writes `calibration.json` plus `signals.csv` (one row per
/// profile × unit) into `out`.
pub fn cmd_calibrate(
    geometry: &ArrayGeometry,
    profiles: &[PressProfile],
    out: &Path,
) -> Result<Calibration, CalibrateError> {
    let cal = calibrate_thresholds(geometry, profiles, &CalibrationOptions::default())?;
    fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(&cal)?;
    text.push('\n');
    fs::write(out.join("calibration.json"), text)?;
    let mut w = io::BufWriter::new(fs::File::create(out.join("signals.csv"))?);
    write_signals(&mut w, &cal)?;
    w.flush()?;
    Ok(cal)
}

pub fn write_signals<W: Write>(w: &mut W, cal: &Calibration) -> io::Result<()> {
    writeln!(w, "position_mm,weight_g,unit,force_n,signal,active,expected")?;
    for t in &cal.tables {
        for u in 0..t.signal.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(t.position_mm),
                fmt_f64(t.weight_g),
                u + 1,
                fmt_f64(t.force_n[u]),
                fmt_f64(t.signal[u]),
                u8::from(t.active[u]),
                u8::from(t.expected.contains(&(u + 1)))
            )?;
        }
    }
    Ok(())
}
