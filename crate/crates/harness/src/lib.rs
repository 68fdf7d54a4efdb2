//! Experiment orchestration for the tactile door-opening workbench: run
//! configuration, training and evaluation runs on disk, threshold
//! calibration and the comparison report.

pub mod calibrate;
pub mod config;
pub mod report;
pub mod runs;
