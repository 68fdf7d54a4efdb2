//! Fitting the force scale and per-unit thresholds from press tests.
//!
//! A press test places a flat block of known weight on a rectangular region
//! of one pad. The block rests on the bumps under it, so the weight is shared
//! between units in proportion to how much of each bump footprint the region
//! covers. For every unit the fitter needs a threshold strictly above all
//! signals it sees while unloaded and strictly below all signals it sees
//! while loaded; it takes the midpoint of that gap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ArrayGeometry, UNITS, UNITS_PER_PAD};
use crate::geometry::{circle_polygon_overlap, Rect};

const GRAVITY: f64 = 9.81;

/// Pressed rectangle in pad-local millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMm {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl RegionMm {
    fn rect_m(&self) -> Rect {
        Rect {
            min: [self.a_min * 1e-3, self.b_min * 1e-3],
            max: [self.a_max * 1e-3, self.b_max * 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressProfile {
    /// Label of the press position along the sensor (rig millimetres).
    pub position_mm: f64,
    pub weight_g: f64,
    pub region: RegionMm,
    /// 1-based unit numbers expected to activate. When absent, the units whose
    /// centres lie inside the region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_units: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Signal level the heaviest press is mapped to, as twice this threshold.
    pub reference_threshold: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            reference_threshold: 1.25,
        }
    }
}

/// A unit whose loaded and unloaded signals overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    /// 1-based unit number.
    pub unit: usize,
    /// Profile index where the unit should be on, with its weakest signal.
    pub loaded_profile: usize,
    pub loaded_signal: f64,
    /// Profile index where the unit should be off, with its strongest signal
    /// (`None` when the conflict is a loaded unit receiving no force).
    pub unloaded_profile: Option<usize>,
    pub unloaded_signal: f64,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no press profiles given")]
    Empty,
    #[error("profile {0} does not cover any unit")]
    NoContact(usize),
    #[error("profile {profile} lists unit {unit}, valid units are 1..=15")]
    UnknownUnit { profile: usize, unit: usize },
    #[error("profile {profile} has invalid weight {weight_g} g")]
    BadWeight { profile: usize, weight_g: f64 },
    #[error("units never loaded by any profile: {0:?}")]
    Uncovered(Vec<usize>),
    #[error("no threshold separates loaded and unloaded signals: {}", describe(.0))]
    Infeasible(Vec<Conflict>),
}

fn describe(conflicts: &[Conflict]) -> String {
    conflicts
        .iter()
        .map(|c| match c.unloaded_profile {
            Some(p) => format!(
                "unit {} (on in profile {} at {:.4}, off in profile {} at {:.4})",
                c.unit, c.loaded_profile, c.loaded_signal, p, c.unloaded_signal
            ),
            None => format!(
                "unit {} (on in profile {} but receives no force)",
                c.unit, c.loaded_profile
            ),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Replay of one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTable {
    pub position_mm: f64,
    pub weight_g: f64,
    pub expected: Vec<usize>,
    pub force_n: Vec<f64>,
    pub signal: Vec<f64>,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub weight_g: f64,
    /// Midpoint threshold that separates this weight's profiles alone.
    pub threshold: f64,
    /// Smallest `signal − κ` over loaded units at this weight.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    /// One threshold per unit; the 15 pad values are repeated for the second pad.
    pub kappa: Vec<f64>,
    pub per_weight: Vec<WeightSummary>,
    pub tables: Vec<ActivationTable>,
}

/// Per-unit force for a uniform press (N).
pub fn press_forces(
    geometry: &ArrayGeometry,
    profile: &PressProfile,
) -> [f64; UNITS_PER_PAD] {
    let region = profile.region.rect_m().polygon();
    let overlaps: [f64; UNITS_PER_PAD] = std::array::from_fn(|k| {
        circle_polygon_overlap(geometry.unit_center(k), geometry.bump_radius, &region)
    });
    let total: f64 = overlaps.iter().sum();
    let weight_n = profile.weight_g * 1e-3 * GRAVITY;
    if total <= 0.0 {
        return [0.0; UNITS_PER_PAD];
    }
    std::array::from_fn(|k| weight_n * overlaps[k] / total)
}

fn expected_units(
    geometry: &ArrayGeometry,
    profile: &PressProfile,
    index: usize,
) -> Result<Vec<usize>, CalibrationError> {
    match &profile.expected_units {
        Some(units) => {
            for &unit in units {
                if unit == 0 || unit > UNITS_PER_PAD {
                    return Err(CalibrationError::UnknownUnit {
                        profile: index,
                        unit,
                    });
                }
            }
            let mut v = units.clone();
            v.sort_unstable();
            v.dedup();
            Ok(v)
        }
        None => {
            let rect = profile.region.rect_m();
            Ok((0..UNITS_PER_PAD)
                .filter(|&k| rect.contains(geometry.unit_center(k)))
                .map(|k| k + 1)
                .collect())
        }
    }
}

/// Midpoint thresholds for a subset of profiles; `Err` lists conflicts.
fn separate(
    signals: &[[f64; UNITS_PER_PAD]],
    expected: &[Vec<usize>],
    subset: &[usize],
) -> Result<[f64; UNITS_PER_PAD], Vec<Conflict>> {
    let mut kappa = [0.0; UNITS_PER_PAD];
    let mut conflicts = Vec::new();
    for k in 0..UNITS_PER_PAD {
        let unit = k + 1;
        let mut lo_on: Option<(usize, f64)> = None;
        let mut hi_off: Option<(usize, f64)> = None;
        for &p in subset {
            let s = signals[p][k];
            if expected[p].contains(&unit) {
                if lo_on.is_none_or(|(_, v)| s < v) {
                    lo_on = Some((p, s));
                }
            } else if hi_off.is_none_or(|(_, v)| s > v) {
                hi_off = Some((p, s));
            }
        }
        let off_level = hi_off.map_or(0.0, |(_, v)| v.max(0.0));
        match lo_on {
            Some((p, on)) if on <= 0.0 => conflicts.push(Conflict {
                unit,
                loaded_profile: p,
                loaded_signal: on,
                unloaded_profile: None,
                unloaded_signal: 0.0,
            }),
            Some((p, on)) if on <= off_level => conflicts.push(Conflict {
                unit,
                loaded_profile: p,
                loaded_signal: on,
                unloaded_profile: hi_off.map(|(q, _)| q),
                unloaded_signal: off_level,
            }),
            Some((_, on)) => kappa[k] = 0.5 * (on + off_level),
            // Never loaded in this subset: any threshold above the off level.
            None => kappa[k] = f64::NAN,
        }
    }
    if conflicts.is_empty() {
        Ok(kappa)
    } else {
        Err(conflicts)
    }
}

/// Fits `scale` and per-unit thresholds so that every profile activates
/// exactly its expected units.
pub fn calibrate_thresholds(
    geometry: &ArrayGeometry,
    profiles: &[PressProfile],
    options: &CalibrationOptions,
) -> Result<Calibration, CalibrationError> {
    if profiles.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let mut forces = Vec::with_capacity(profiles.len());
    let mut expected = Vec::with_capacity(profiles.len());
    for (i, p) in profiles.iter().enumerate() {
        if !(p.weight_g > 0.0 && p.weight_g.is_finite()) {
            return Err(CalibrationError::BadWeight {
                profile: i,
                weight_g: p.weight_g,
            });
        }
        let f = press_forces(geometry, p);
        if f.iter().all(|&x| x == 0.0) {
            return Err(CalibrationError::NoContact(i));
        }
        forces.push(f);
        expected.push(expected_units(geometry, p, i)?);
    }

    let uncovered: Vec<usize> = (1..=UNITS_PER_PAD)
        .filter(|u| !expected.iter().any(|e| e.contains(u)))
        .collect();
    if !uncovered.is_empty() {
        return Err(CalibrationError::Uncovered(uncovered));
    }

    // Scale: the heaviest press's weakest loaded unit lands at twice the
    // reference threshold.
    let heaviest = profiles
        .iter()
        .map(|p| p.weight_g)
        .fold(f64::MIN, f64::max);
    let weakest_heavy = profiles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.weight_g == heaviest)
        .flat_map(|(i, _)| expected[i].iter().map(move |&u| (i, u)))
        .map(|(i, u)| forces[i][u - 1])
        .fold(f64::MAX, f64::min);
    if weakest_heavy <= 0.0 || weakest_heavy == f64::MAX {
        let all: Vec<usize> = (0..profiles.len()).collect();
        let zeros: Vec<[f64; UNITS_PER_PAD]> = forces.clone();
        return Err(CalibrationError::Infeasible(
            separate(&zeros, &expected, &all).err().unwrap_or_default(),
        ));
    }
    let scale = 2.0 * options.reference_threshold / weakest_heavy;
    let signals: Vec<[f64; UNITS_PER_PAD]> = forces
        .iter()
        .map(|f| std::array::from_fn(|k| f[k] * scale))
        .collect();

    let all: Vec<usize> = (0..profiles.len()).collect();
    let pad_kappa = separate(&signals, &expected, &all).map_err(CalibrationError::Infeasible)?;

    let mut weights: Vec<f64> = profiles.iter().map(|p| p.weight_g).collect();
    weights.sort_by(f64::total_cmp);
    weights.dedup();
    let per_weight = weights
        .iter()
        .map(|&w| {
            let subset: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&i| profiles[i].weight_g == w)
                .collect();
            let mut on_min = f64::MAX;
            let mut off_max: f64 = 0.0;
            let mut margin = f64::MAX;
            for &i in &subset {
                for k in 0..UNITS_PER_PAD {
                    let s = signals[i][k];
                    if expected[i].contains(&(k + 1)) {
                        on_min = on_min.min(s);
                        margin = margin.min(s - pad_kappa[k]);
                    } else {
                        off_max = off_max.max(s);
                    }
                }
            }
            WeightSummary {
                weight_g: w,
                threshold: 0.5 * (on_min + off_max),
                margin,
            }
        })
        .collect();

    let tables = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| ActivationTable {
            position_mm: p.position_mm,
            weight_g: p.weight_g,
            expected: expected[i].clone(),
            force_n: forces[i].to_vec(),
            signal: signals[i].to_vec(),
            active: (0..UNITS_PER_PAD)
                .map(|k| signals[i][k] > pad_kappa[k])
                .collect(),
        })
        .collect();

    let kappa = (0..UNITS).map(|u| pad_kappa[u % UNITS_PER_PAD]).collect();
    Ok(Calibration {
        scale,
        kappa,
        per_weight,
        tables,
    })
}

/// The three-position, four-weight press grid on one pad.
///
/// Each position presses a square covering a 3 × 3 block of bumps; the
/// square's edges run through the gaps between bumps so neighbouring units
/// receive no load.
pub fn standard_press_grid(geometry: &ArrayGeometry) -> Vec<PressProfile> {
    let pitch_a = geometry.pitch[0] * 1e3;
    let half_a = geometry.pad_half_extent[0] * 1e3;
    let half_b = geometry.pad_half_extent[1] * 1e3;
    // Centre rows (0-based along the finger) of the 3-row windows.
    let positions = [(128.0, 1.0), (256.0, 2.0), (350.0, 3.0)];
    let weights = [50.0, 100.0, 200.0, 500.0];
    let mut out = Vec::new();
    for &(position_mm, centre_row) in &positions {
        let centre_a = (centre_row - 2.0) * pitch_a;
        let region = RegionMm {
            a_min: (centre_a - 1.5 * pitch_a).max(-half_a),
            a_max: (centre_a + 1.5 * pitch_a).min(half_a),
            b_min: -half_b,
            b_max: half_b,
        };
        for &weight_g in &weights {
            out.push(PressProfile {
                position_mm,
                weight_g,
                region,
                expected_units: None,
            });
        }
    }
    out
}
