//! Resistive scan of the 6 × 5 sensing matrix.
//!
//! Every element connects a row line to a column line. During a scan one
//! column is driven to the supply voltage while all other columns are held
//! at ground, and each row is read through a known resistor to ground. A
//! row's reading therefore depends on every element of that row, which is
//! the cross-talk that [`cancel_crosstalk`] removes.
//!
//! With the driven column `d`, Kirchhoff's current law at row node `r` gives
//! `V_rd · (Σ_c G_rc + G_s) = V_dd · G_rd`. Summing the five readings of a
//! row eliminates the unknown row total, so each element's conductance
//! follows in closed form:
//!
//! ```text
//! G_rd = V_rd · G_s / (V_dd − Σ_d V_rd)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROWS: usize = 6;
pub const COLS: usize = 5;

pub type Matrix = [[f64; COLS]; ROWS];

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("element ({row}, {col}) has non-positive resistance {value}")]
    NonPositiveElement { row: usize, col: usize, value: f64 },
    #[error("row resistor {row} has non-positive resistance {value}")]
    NonPositiveRowResistor { row: usize, value: f64 },
    #[error("drive voltage must be positive, got {0}")]
    BadDrive(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitModel {
    /// Ohms, indexed `[row][col]`.
    pub element_resistance: Matrix,
    /// Known resistor from each row line to ground (ohms).
    pub row_resistor: [f64; ROWS],
    pub drive_voltage: f64,
    /// ADC resolution; `None` disables quantization.
    pub adc_bits: Option<u32>,
}

impl CircuitModel {
    pub fn uniform(resistance: f64, row_resistor: f64) -> Self {
        Self {
            element_resistance: [[resistance; COLS]; ROWS],
            row_resistor: [row_resistor; ROWS],
            drive_voltage: 5.0,
            adc_bits: Some(10),
        }
    }

    fn validate(&self) -> Result<(), CircuitError> {
        if !(self.drive_voltage > 0.0) {
            return Err(CircuitError::BadDrive(self.drive_voltage));
        }
        for (row, &value) in self.row_resistor.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CircuitError::NonPositiveRowResistor { row, value });
            }
        }
        for (row, cols) in self.element_resistance.iter().enumerate() {
            for (col, &value) in cols.iter().enumerate() {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(CircuitError::NonPositiveElement { row, col, value });
                }
            }
        }
        Ok(())
    }
}

/// Rounds `volts` to the nearest ADC code and back to volts.
pub fn quantize(volts: f64, full_scale: f64, bits: u32) -> f64 {
    let max_code = ((1u64 << bits) - 1) as f64;
    let code = (volts / full_scale * max_code).round().clamp(0.0, max_code);
    code * full_scale / max_code
}

/// Row voltages for every driven column: `readings[row][driven_col]`.
pub fn scan_array(circuit: &CircuitModel) -> Result<Matrix, CircuitError> {
    circuit.validate()?;
    let vdd = circuit.drive_voltage;
    let mut out = [[0.0; COLS]; ROWS];
    for (r, row) in circuit.element_resistance.iter().enumerate() {
        let conductance: [f64; COLS] = std::array::from_fn(|c| 1.0 / row[c]);
        let total: f64 = conductance.iter().sum::<f64>() + 1.0 / circuit.row_resistor[r];
        for d in 0..COLS {
            let v = vdd * conductance[d] / total;
            out[r][d] = match circuit.adc_bits {
                Some(bits) => quantize(v, vdd, bits),
                None => v,
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementEstimate {
    Resistance(f64),
    /// Reading quantized to zero: the element is effectively open.
    Open,
    /// The row's readings reach the supply; conductances cannot be separated.
    Saturated,
}

impl ElementEstimate {
    pub fn resistance(self) -> Option<f64> {
        match self {
            ElementEstimate::Resistance(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceEstimate {
    pub elements: [[ElementEstimate; COLS]; ROWS],
}

impl ResistanceEstimate {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.elements[row][col].resistance()
    }

    /// Entries that could not be recovered, with the reason.
    pub fn flagged(&self) -> Vec<(usize, usize, ElementEstimate)> {
        let mut out = Vec::new();
        for (r, row) in self.elements.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                if e.resistance().is_none() {
                    out.push((r, c, *e));
                }
            }
        }
        out
    }

    /// Rebuilds a circuit from the estimates, or `None` if any entry is flagged.
    pub fn to_circuit(&self, template: &CircuitModel) -> Option<CircuitModel> {
        let mut c = template.clone();
        for r in 0..ROWS {
            for col in 0..COLS {
                c.element_resistance[r][col] = self.get(r, col)?;
            }
        }
        Some(c)
    }
}

/// Recovers element resistances from one full scan.
pub fn cancel_crosstalk(
    readings: &Matrix,
    row_resistor: &[f64; ROWS],
    drive_voltage: f64,
    adc_bits: Option<u32>,
) -> ResistanceEstimate {
    let full_code = adc_bits.map(|b| quantize(drive_voltage, drive_voltage, b));
    let mut elements = [[ElementEstimate::Saturated; COLS]; ROWS];
    for r in 0..ROWS {
        let sum: f64 = readings[r].iter().sum();
        let headroom = drive_voltage - sum;
        let row_saturated = headroom <= 0.0
            || readings[r]
                .iter()
                .any(|&v| full_code.is_some_and(|f| v >= f));
        for d in 0..COLS {
            let v = readings[r][d];
            elements[r][d] = if row_saturated {
                ElementEstimate::Saturated
            } else if v <= 0.0 {
                ElementEstimate::Open
            } else {
                ElementEstimate::Resistance(headroom * row_resistor[r] / v)
            };
        }
    }
    ResistanceEstimate { elements }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_matrix_gives_uniform_readings_and_estimates() {
        let circuit = CircuitModel::uniform(10_000.0, 2_000.0);
        let v = scan_array(&circuit).unwrap();
        let step = 5.0 / 1023.0;
        for row in &v {
            for &x in row {
                assert!((x - v[0][0]).abs() <= step);
            }
        }
        let est = cancel_crosstalk(&v, &circuit.row_resistor, 5.0, Some(10));
        let first = est.get(0, 0).unwrap();
        for r in 0..ROWS {
            for c in 0..COLS {
                assert!((est.get(r, c).unwrap() - first).abs() < 1e-9 * first);
            }
        }
    }

    #[test]
    fn dominant_element_gives_frame_maximum() {
        let mut circuit = CircuitModel::uniform(20_000.0, 2_000.0);
        circuit.element_resistance[2][3] = 500.0;
        let v = scan_array(&circuit).unwrap();
        let max = v.iter().flatten().cloned().fold(f64::MIN, f64::max);
        assert_eq!(v[2][3], max);
    }

    #[test]
    fn rejects_non_positive_resistance() {
        let mut circuit = CircuitModel::uniform(1_000.0, 1_000.0);
        circuit.element_resistance[1][1] = 0.0;
        assert_eq!(
            scan_array(&circuit),
            Err(CircuitError::NonPositiveElement { row: 1, col: 1, value: 0.0 })
        );
        let mut circuit = CircuitModel::uniform(1_000.0, 1_000.0);
        circuit.row_resistor[4] = -1.0;
        assert!(scan_array(&circuit).is_err());
    }

    #[test]
    fn exact_inverse_without_quantization() {
        let mut circuit = CircuitModel::uniform(8_000.0, 2_000.0);
        circuit.adc_bits = None;
        circuit.element_resistance[0][0] = 1_000.0;
        circuit.element_resistance[5][4] = 30_000.0;
        let v = scan_array(&circuit).unwrap();
        let est = cancel_crosstalk(&v, &circuit.row_resistor, 5.0, None);
        for r in 0..ROWS {
            for c in 0..COLS {
                let want = circuit.element_resistance[r][c];
                assert!((est.get(r, c).unwrap() - want).abs() < 1e-9 * want);
            }
        }
    }

    #[test]
    fn open_and_saturated_entries_are_flagged() {
        let mut readings = [[0.5; COLS]; ROWS];
        readings[0][2] = 0.0;
        readings[3] = [1.2; COLS];
        let est = cancel_crosstalk(&readings, &[1_000.0; ROWS], 5.0, Some(10));
        let flagged = est.flagged();
        assert!(flagged.contains(&(0, 2, ElementEstimate::Open)));
        assert_eq!(
            flagged.iter().filter(|f| f.0 == 3 && f.2 == ElementEstimate::Saturated).count(),
            COLS
        );
        assert!(est.get(0, 1).is_some());
        assert!(est.to_circuit(&CircuitModel::uniform(1.0, 1.0)).is_none());
    }
}
