//! Signal-processing primitives shared by preprocessing, detection and quality assessment.

pub mod filter;
pub mod wavelet;

use thiserror::Error;

pub use wavelet::{
    dwt, idwt, max_feasible_level, reconstruct_from_details, BandSelection, DwtDecomposition,
    Wavelet,
};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("signal of {len} samples is too short for a {levels}-level decomposition")]
    SignalTooShort { len: usize, levels: usize },
    #[error("inconsistent coefficient lengths at level {level}: approx {approx}, detail {detail}")]
    InconsistentLengths {
        level: usize,
        approx: usize,
        detail: usize,
    },
    #[error("band index {level} outside 1..={levels}")]
    BadLevelIndex { level: usize, levels: usize },
    #[error("empty input")]
    EmptyInput,
}

pub fn mean(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        None
    } else {
        Some(x.iter().sum::<f64>() / x.len() as f64)
    }
}

/// Population variance.
pub fn variance(x: &[f64]) -> Result<f64, DspError> {
    let m = mean(x).ok_or(DspError::EmptyInput)?;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    Ok(v.max(0.0))
}

/// Population standard deviation; zero for an empty slice.
pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).map(f64::sqrt).unwrap_or(0.0)
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(x: &[f64], q: f64) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q.clamp(0.0, 100.0) / 100.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Contiguous non-overlapping `[start, end)` windows of `width_s` seconds; the trailing
/// partial window is kept.
pub fn windows(length: usize, fs: f64, width_s: f64) -> Vec<(usize, usize)> {
    let width = ((width_s * fs).round() as usize).max(1);
    (0..length)
        .step_by(width)
        .map(|start| (start, (start + width).min(length)))
        .collect()
}

/// Shift applied to wavelet band indices so that a band keeps roughly the same
/// frequency range as it has at 250 Hz.
pub fn band_shift(fs: f64) -> i32 {
    (fs / 250.0).log2().round() as i32
}

/// Band index `level_at_250` translated to sampling rate `fs`, never below 1.
pub fn shifted_band(level_at_250: usize, fs: f64) -> usize {
    (level_at_250 as i32 + band_shift(fs)).max(1) as usize
}
