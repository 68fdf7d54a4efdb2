//! The 30-unit tactile array on the two gripper pads.
//!
//! Each pad carries 15 foam bumps on a 5 × 3 grid. Pad-local coordinates are
//! `(a, b)`: `a` runs along the finger (the tool approach axis), `b` across
//! it. Unit `k` of a pad sits at grid cell `(k / 3, k % 3)`; unit `pad·15 + k`
//! is the global index. The electrical matrix is 6 × 5: row `pad·3 + k % 3`,
//! column `k / 3`.
//!
//! At runtime a unit's raw force is scaled to a signal and compared with a
//! per-unit threshold; training additionally flips bits at random.

mod calibration;
mod circuit;

pub use calibration::{
    press_forces, WeightSummary,
    calibrate_thresholds, standard_press_grid, ActivationTable, Calibration, CalibrationError,
    CalibrationOptions, Conflict, PressProfile, RegionMm,
};
pub use circuit::{
    cancel_crosstalk, quantize, scan_array, CircuitError, CircuitModel, ElementEstimate,
    ResistanceEstimate, COLS, ROWS,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

pub const PADS: usize = 2;
pub const UNITS_PER_PAD: usize = 15;
pub const UNITS: usize = PADS * UNITS_PER_PAD;
const GRID_A: usize = 5;
const GRID_B: usize = 3;

pub type UnitValues = [f64; UNITS];
pub type UnitBits = [bool; UNITS];

/// Pad and bump layout, shared by both pads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    /// Half extents of the pad face along `a` and `b` (m).
    pub pad_half_extent: [f64; 2],
    /// Bump pitch along `a` and `b` (m).
    pub pitch: [f64; 2],
    /// Radius of a bump's contact footprint (m).
    pub bump_radius: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            pad_half_extent: [0.020, 0.012],
            pitch: [0.008, 0.008],
            bump_radius: 0.003,
        }
    }
}

impl ArrayGeometry {
    /// Pad-local centre of within-pad unit `k` (0-based).
    pub fn unit_center(&self, k: usize) -> Point2 {
        assert!(k < UNITS_PER_PAD, "unit {k} out of range");
        let ia = (k / GRID_B) as f64 - (GRID_A as f64 - 1.0) / 2.0;
        let ib = (k % GRID_B) as f64 - (GRID_B as f64 - 1.0) / 2.0;
        [ia * self.pitch[0], ib * self.pitch[1]]
    }

    pub fn unit_centers(&self) -> [Point2; UNITS_PER_PAD] {
        std::array::from_fn(|k| self.unit_center(k))
    }

    /// True when every bump footprint lies inside the pad face.
    pub fn footprints_within_pad(&self) -> bool {
        self.unit_centers().iter().all(|c| {
            c[0].abs() + self.bump_radius <= self.pad_half_extent[0] + 1e-12
                && c[1].abs() + self.bump_radius <= self.pad_half_extent[1] + 1e-12
        })
    }
}

/// `(row, col)` of global unit `unit` (0-based) in the 6 × 5 scan matrix.
pub fn matrix_position(unit: usize) -> (usize, usize) {
    assert!(unit < UNITS, "unit {unit} out of range");
    let pad = unit / UNITS_PER_PAD;
    let k = unit % UNITS_PER_PAD;
    (pad * GRID_B + k % GRID_B, k / GRID_B)
}

/// Inverse of [`matrix_position`].
pub fn unit_at(row: usize, col: usize) -> usize {
    assert!(row < ROWS && col < COLS, "({row}, {col}) outside the scan matrix");
    let pad = row / GRID_B;
    pad * UNITS_PER_PAD + col * GRID_B + row % GRID_B
}

/// Runtime sensing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TactileConfig {
    /// Whether the 30 bits are part of the policy observation.
    pub enabled: bool,
    /// Force-to-signal factor (signal per newton).
    pub scale: f64,
    /// Per-unit binarization thresholds.
    pub kappa: Vec<f64>,
    pub geometry: ArrayGeometry,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            scale: 1.0,
            kappa: vec![0.25; UNITS],
            geometry: ArrayGeometry::default(),
        }
    }
}

impl TactileConfig {
    pub fn kappa_array(&self) -> UnitValues {
        let mut k = [0.0; UNITS];
        k.copy_from_slice(&self.kappa);
        k
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kappa.len() != UNITS {
            return Err(format!("kappa needs {UNITS} entries, got {}", self.kappa.len()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(format!("scale must be positive, got {}", self.scale));
        }
        if self.kappa.iter().any(|k| !k.is_finite()) {
            return Err("kappa entries must be finite".into());
        }
        if !self.geometry.footprints_within_pad() {
            return Err("bump footprints extend beyond the pad face".into());
        }
        Ok(())
    }
}

/// One sensing step: raw forces, scaled signal, thresholded bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileFrame {
    pub raw_force: UnitValues,
    pub signal: UnitValues,
    pub bits: UnitBits,
}

impl TactileFrame {
    pub fn from_forces(raw_force: &UnitValues, scale: f64, kappa: &UnitValues) -> Self {
        let signal = scale_signal(raw_force, scale);
        let bits = binarize(&signal, kappa);
        Self {
            raw_force: *raw_force,
            signal,
            bits,
        }
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `bit[i] = signal[i] > kappa[i]`.
pub fn binarize(signal: &UnitValues, kappa: &UnitValues) -> UnitBits {
    std::array::from_fn(|i| signal[i] > kappa[i])
}

pub fn scale_signal(raw_force: &UnitValues, scale: f64) -> UnitValues {
    std::array::from_fn(|i| raw_force[i] * scale)
}

/// Inverts each bit independently with probability `p_flip`.
pub fn flip_bits<R: Rng + ?Sized>(bits: &UnitBits, p_flip: f64, rng: &mut R) -> UnitBits {
    assert!((0.0..=1.0).contains(&p_flip), "p_flip {p_flip} outside [0, 1]");
    std::array::from_fn(|i| bits[i] ^ rng.random_bool(p_flip))
}

pub fn bits_as_f64(bits: &UnitBits) -> [f64; UNITS] {
    std::array::from_fn(|i| if bits[i] { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn uniform(v: f64) -> UnitValues {
        [v; UNITS]
    }

    #[test]
    fn threshold_examples() {
        let mut signal = uniform(0.0);
        signal[0] = 0.30;
        signal[1] = 0.25;
        let bits = binarize(&signal, &uniform(0.25));
        assert!(bits[0]);
        assert!(!bits[1]);
        assert!(bits[2..].iter().all(|b| !b));
    }

    #[test]
    fn scaling_examples() {
        let mut raw = uniform(0.0);
        raw[3] = 2.0;
        assert_eq!(scale_signal(&raw, 1.0), raw);
        assert_eq!(scale_signal(&raw, 0.5)[3], 1.0);
    }

    #[test]
    fn flip_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bits = [false; UNITS];
        bits[4] = true;
        assert_eq!(flip_bits(&bits, 0.0, &mut rng), bits);
        let flipped = flip_bits(&bits, 1.0, &mut rng);
        assert!(flipped.iter().zip(&bits).all(|(a, b)| a != b));
    }

    #[test]
    fn flip_is_seeded() {
        let bits = [false; UNITS];
        let a = flip_bits(&bits, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        let b = flip_bits(&bits, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn flip_rate_and_hamming_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let frames = 1_000_000 / UNITS + 1;
        let bits = [false; UNITS];
        let mut flips = 0usize;
        for _ in 0..frames {
            flips += flip_bits(&bits, 0.005, &mut rng).iter().filter(|&&b| b).count();
        }
        let draws = (frames * UNITS) as f64;
        let rate = flips as f64 / draws;
        assert!((0.003..=0.007).contains(&rate), "rate {rate}");
        // Mean Hamming distance per frame against 30·p with a 4σ band.
        let mean = flips as f64 / frames as f64;
        let sigma = (UNITS as f64 * 0.005 * 0.995 / frames as f64).sqrt();
        assert!((mean - 0.15).abs() < 4.0 * sigma, "mean hamming {mean}");
    }

    #[test]
    fn index_map_is_bijective() {
        let mut seen = HashSet::new();
        for u in 0..UNITS {
            let (r, c) = matrix_position(u);
            assert!(r < ROWS && c < COLS);
            assert_eq!(unit_at(r, c), u);
            seen.insert((r, c));
        }
        assert_eq!(seen.len(), ROWS * COLS);
    }

    #[test]
    fn default_footprints_fit() {
        let g = ArrayGeometry::default();
        assert!(g.footprints_within_pad());
        assert_eq!(g.unit_center(0), [-0.016, -0.008]);
        assert_eq!(g.unit_center(7), [0.0, 0.0]);
        assert!(TactileConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn binarize_is_monotone(
            base in prop::array::uniform30(0.0f64..2.0),
            bump in prop::array::uniform30(0.0f64..1.0),
            kappa in prop::array::uniform30(0.01f64..1.5),
        ) {
            let before = binarize(&base, &kappa);
            let raised: UnitValues = std::array::from_fn(|i| base[i] + bump[i]);
            let after = binarize(&raised, &kappa);
            for i in 0..UNITS {
                prop_assert!(!before[i] || after[i]);
            }
        }

        #[test]
        fn zero_force_gives_zero_bits(
            kappa in prop::array::uniform30(1e-9f64..5.0),
            scale in 1e-6f64..1e6,
        ) {
            let frame = TactileFrame::from_forces(&[0.0; UNITS], scale, &kappa);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let bits = flip_bits(&frame.bits, 0.0, &mut rng);
            prop_assert!(bits.iter().all(|b| !b));
        }
    }
}
