//! CSI to network input: per-vector standardized magnitude, zero padded.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{CsiVector, Dataset};

/// Relative floor on the standard deviation used during standardization.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Length of each input channel after padding.
    pub input_length: usize,
    /// Append a detrended, standardized phase channel.
    #[serde(default)]
    pub phase: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            input_length: 33,
            phase: false,
        }
    }
}

impl FeatureConfig {
    pub fn channels(&self) -> usize {
        if self.phase {
            2
        } else {
            1
        }
    }

    pub fn width(&self) -> usize {
        self.channels() * self.input_length
    }
}

/// Zero mean, unit variance; a constant vector maps to zeros.
fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let std = var.sqrt().max(STD_FLOOR * scale).max(f64::MIN_POSITIVE);
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Unwrapped phase with its least-squares line removed.
fn detrended_phase(csi: &CsiVector) -> Vec<f64> {
    let mut phase: Vec<f64> = csi.values.iter().map(|v| v.arg()).collect();
    for i in 1..phase.len() {
        let step = phase[i] - phase[i - 1];
        let wraps = (step / (2.0 * std::f64::consts::PI)).round();
        phase[i] -= wraps * 2.0 * std::f64::consts::PI;
    }
    let n = phase.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = phase.iter().sum::<f64>() / n;
    let sxx: f64 = (0..phase.len()).map(|i| (i as f64 - mean_x).powi(2)).sum();
    let sxy: f64 = phase
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - mean_x) * (y - mean_y))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    phase
        .iter()
        .enumerate()
        .map(|(i, y)| y - mean_y - slope * (i as f64 - mean_x))
        .collect()
}

/// Network input for one CSI vector and whether it was degenerate (all zero).
///
/// Channels are laid out channel-major, each padded with zeros to `input_length`.
pub fn csi_to_input(csi: &CsiVector, config: &FeatureConfig) -> Result<(Vec<f64>, bool)> {
    if csi.is_empty() || csi.len() > config.input_length {
        return Err(Error::config(format!(
            "CSI length {} does not fit input length {}",
            csi.len(),
            config.input_length
        )));
    }
    if !csi.is_finite() {
        return Err(Error::data("CSI contains non-finite values"));
    }
    let mut out = vec![0.0; config.width()];
    let magnitudes = csi.magnitudes();
    if magnitudes.iter().all(|&m| m == 0.0) {
        return Ok((out, true));
    }
    out[..csi.len()].copy_from_slice(&standardize(&magnitudes));
    if config.phase {
        let start = config.input_length;
        out[start..start + csi.len()].copy_from_slice(&standardize(&detrended_phase(csi)));
    }
    Ok((out, false))
}

/// Feature matrix (one row per record) for the given record indices.
pub fn dataset_inputs(dataset: &Dataset, indices: &[usize], config: &FeatureConfig) -> Result<Array2<f64>> {
    let width = config.width();
    let mut out = Array2::zeros((indices.len(), width));
    for (row, &i) in indices.iter().enumerate() {
        let (x, _) = csi_to_input(&dataset.records[i].csi, config)?;
        out.row_mut(row).assign(&ndarray::ArrayView1::from(&x));
    }
    Ok(out)
}

/// Standardized magnitudes without padding; degenerate CSI is a data error.
pub fn magnitude_feature(csi: &CsiVector, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let (mut x, degenerate) = csi_to_input(csi, cfg)?;
    if degenerate {
        return Err(Error::data("degenerate (all-zero) CSI"));
    }
    x.truncate(csi.len());
    Ok(x)
}
