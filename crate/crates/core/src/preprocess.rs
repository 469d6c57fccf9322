//! ECG denoise/normalise/optimise chain and baseline removal for pulsatile channels.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, max_feasible_level, BandSelection, DspError, Wavelet};

/// ECG decomposition depth at 250 Hz and deeper for faster rates.
pub const ECG_WAVELET_DEPTH: usize = 8;
/// Detail bands carrying QRS energy at 250 Hz (roughly 7.8-62.5 Hz).
pub const QRS_BANDS_AT_250: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedEcg {
    /// Sum of the kept detail bands.
    pub denoised: Vec<f64>,
    /// `(x - mean(x)) / max(x)` of the denoised signal.
    pub normalized: Vec<f64>,
    /// `(4 * normalized)^2`.
    pub optimized: Vec<f64>,
    /// Set when `max(denoised) == 0` and `normalized` was defined as zeros.
    pub degenerate_max: bool,
}

/// Band indices to keep for QRS enhancement at sampling rate `fs`.
pub fn qrs_bands(fs: f64) -> Vec<usize> {
    QRS_BANDS_AT_250
        .iter()
        .map(|&b| dsp::shifted_band(b, fs))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn normalize(x: &[f64]) -> (Vec<f64>, bool) {
    let Some(mean) = dsp::mean(x) else {
        return (Vec::new(), true);
    };
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == 0.0 {
        return (vec![0.0; x.len()], true);
    }
    (x.iter().map(|v| (v - mean) / max).collect(), false)
}

pub fn optimize(normalized: &[f64]) -> Vec<f64> {
    normalized.iter().map(|v| (4.0 * v).powi(2)).collect()
}

pub fn denoise_ecg(ecg: &[f64], fs: f64) -> Result<PreprocessedEcg, DspError> {
    if ecg.len() < 16 || fs <= 0.0 {
        return Err(DspError::SignalTooShort {
            len: ecg.len(),
            levels: ECG_WAVELET_DEPTH,
        });
    }
    let bands = qrs_bands(fs);
    let wanted = bands.iter().copied().max().unwrap_or(1).max(ECG_WAVELET_DEPTH);
    let depth = max_feasible_level(ecg.len(), wanted);
    let keep: Vec<usize> = bands.into_iter().filter(|&b| b <= depth).collect();
    let decomp = dsp::dwt(ecg, Wavelet::Db6, depth)?;
    let denoised = dsp::reconstruct_from_details(&decomp, &BandSelection::details(keep))?;
    let (normalized, degenerate_max) = normalize(&denoised);
    if degenerate_max {
        log::debug!("denoised ECG has zero maximum; normalised signal set to zero");
    }
    let optimized = optimize(&normalized);
    Ok(PreprocessedEcg {
        denoised,
        normalized,
        optimized,
        degenerate_max,
    })
}

/// Haar depth used for baseline removal: `floor(log2(fs))`, capped at 8.
pub fn baseline_depth(fs: f64) -> usize {
    (fs.log2().floor().max(1.0) as usize).min(8)
}

/// Removes slow drift by zeroing the deep Haar approximation band.
pub fn remove_baseline_pulsatile(x: &[f64], fs: f64) -> Result<Vec<f64>, DspError> {
    let wanted = baseline_depth(fs);
    if x.len() < (1 << wanted) {
        return Err(DspError::SignalTooShort {
            len: x.len(),
            levels: wanted,
        });
    }
    let decomp = dsp::dwt(x, Wavelet::Haar, wanted)?;
    dsp::reconstruct_from_details(&decomp, &BandSelection::details(1..=wanted))
}
