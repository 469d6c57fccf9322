//! Beat detectors and the per-record detector bank.

pub mod general;
pub mod pan_tompkins;
pub mod slope_sum;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{Candidates, Record};

pub use general::{
    detect_adaptive_threshold, detect_local_max, detect_window_absmax, fp_fn_remover, RrState,
};
pub use pan_tompkins::detect_pan_tompkins;
pub use slope_sum::detect_slope_sum_onset;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("signal of {len} samples is too short, need {needed}")]
    SignalTooShort { len: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorId {
    PanTompkins,
    PanTompkinsOptimized,
    WindowAbsmax,
    AdaptiveThreshold,
    LocalMax,
    SlopeSumOnset,
}

impl DetectorId {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::PanTompkins => "pan_tompkins",
            DetectorId::PanTompkinsOptimized => "pan_tompkins_opt",
            DetectorId::WindowAbsmax => "window_absmax",
            DetectorId::AdaptiveThreshold => "adaptive_threshold",
            DetectorId::LocalMax => "local_max",
            DetectorId::SlopeSumOnset => "slope_sum_onset",
        }
    }

    /// Whether the detector marks pulse onsets rather than apexes.
    pub fn marks_onset(self) -> bool {
        self == DetectorId::SlopeSumOnset
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl PartialOrd for DetectorId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DetectorId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

/// (channel index, detector): the deterministic ordering key of a detection set.
pub type SetKey = (usize, DetectorId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub beats: Vec<usize>,
    pub channel_index: usize,
    pub detector: DetectorId,
    pub fs: f64,
    /// The detector errored; `beats` is empty.
    pub failed: bool,
}

impl DetectionSet {
    pub fn new(channel_index: usize, detector: DetectorId, fs: f64, beats: Vec<usize>) -> Self {
        Self {
            beats,
            channel_index,
            detector,
            fs,
            failed: false,
        }
    }

    pub fn failed(channel_index: usize, detector: DetectorId, fs: f64) -> Self {
        Self {
            failed: true,
            ..Self::new(channel_index, detector, fs, Vec::new())
        }
    }

    pub fn key(&self) -> SetKey {
        (self.channel_index, self.detector)
    }

    /// Strictly increasing and below `len`.
    pub fn is_valid(&self, len: usize) -> bool {
        self.beats.windows(2).all(|w| w[0] < w[1]) && self.beats.last().is_none_or(|&b| b < len)
    }
}

/// Per-channel waveforms prepared for the general detectors.
#[derive(Debug, Clone)]
pub struct PreparedChannels {
    pub ecg_index: usize,
    /// Raw ECG (physical units).
    pub ecg_raw: Vec<f64>,
    /// Optimised ECG from the wavelet chain.
    pub ecg_optimized: Vec<f64>,
    /// (channel index, baseline-removed samples) for each pulsatile candidate.
    pub pulsatile: Vec<(usize, Vec<f64>)>,
    pub proprietary_pressure: Option<usize>,
}

impl PreparedChannels {
    pub fn pulsatile_signal(&self, channel: usize) -> Option<&[f64]> {
        self.pulsatile
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|(_, s)| s.as_slice())
    }

    /// Waveform the general detectors ran on for `channel`.
    pub fn detector_input(&self, channel: usize) -> Option<&[f64]> {
        if channel == self.ecg_index {
            Some(&self.ecg_optimized)
        } else {
            self.pulsatile_signal(channel)
        }
    }
}

fn wrap<E: fmt::Display>(
    channel: usize,
    id: DetectorId,
    fs: f64,
    result: Result<Vec<usize>, E>,
) -> DetectionSet {
    match result {
        Ok(beats) => DetectionSet::new(channel, id, fs, beats),
        Err(e) => {
            log::warn!("detector {id} failed on channel {channel}: {e}");
            DetectionSet::failed(channel, id, fs)
        }
    }
}

/// Window, threshold and local-maximum detectors on one prepared waveform.
fn general_sets(channel: usize, x: &[f64], fs: f64) -> Vec<DetectionSet> {
    let absmax = wrap(channel, DetectorId::WindowAbsmax, fs, detect_window_absmax(x, fs));
    let thresh = DetectionSet::new(
        channel,
        DetectorId::AdaptiveThreshold,
        fs,
        detect_adaptive_threshold(x, fs),
    );
    let local = DetectionSet::new(
        channel,
        DetectorId::LocalMax,
        fs,
        detect_local_max(x, fs, &absmax.beats, &thresh.beats),
    );
    vec![absmax, thresh, local]
}

/// Runs the full detector bank: five sets on the ECG, four on the onset-detector pressure
/// channel and three on each other pulsatile candidate. Output is sorted by set key.
pub fn run_all_detectors(record: &Record, prep: &PreparedChannels) -> Vec<DetectionSet> {
    let fs = record.fs;
    let mut sets = Vec::new();
    let ecg = prep.ecg_index;
    sets.push(wrap(ecg, DetectorId::PanTompkins, fs, detect_pan_tompkins(&prep.ecg_raw, fs)));
    sets.push(wrap(
        ecg,
        DetectorId::PanTompkinsOptimized,
        fs,
        detect_pan_tompkins(&prep.ecg_optimized, fs),
    ));
    sets.extend(general_sets(ecg, &prep.ecg_optimized, fs));

    for (ch, x) in &prep.pulsatile {
        if Some(*ch) == prep.proprietary_pressure {
            let raw = &record.channels[*ch].samples;
            sets.push(wrap(*ch, DetectorId::SlopeSumOnset, fs, detect_slope_sum_onset(raw, fs)));
        }
        sets.extend(general_sets(*ch, x, fs));
    }
    sets.sort_by_key(DetectionSet::key);
    debug_assert!(sets.iter().all(|s| s.is_valid(record.len())));
    sets
}

/// Counts of detector sets implied by a candidate selection.
pub fn expected_set_count(c: &Candidates) -> usize {
    5 + c
        .pulsatile
        .iter()
        .map(|&i| if Some(i) == c.proprietary_pressure { 4 } else { 3 })
        .sum::<usize>()
}
