//! Offline Pan-Tompkins QRS detector.
//!
//! Band-pass (5-15 Hz, zero phase), five-point derivative, squaring and a 150 ms moving
//! window integral feed two adaptive threshold pairs, one on the integrated stream and
//! one on the band-passed stream. Each threshold sits a quarter of the way from the
//! running noise peak level to the running signal peak level. Candidates within 200 ms of
//! the previous QRS are ignored; within 360 ms they must out-slope half of the previous
//! QRS to avoid T waves. There is no search-back: a peak that misses both thresholds is
//! lost. Accepted marks are moved to the largest deviation of the input within the QRS
//! neighbourhood.

use super::DetectorError;
use crate::detectors::general::find_peaks_min_distance;
use crate::dsp::filter::{filtfilt, moving_average, Biquad};

const BAND_LO_HZ: f64 = 5.0;
const BAND_HI_HZ: f64 = 15.0;
const INTEGRATION_S: f64 = 0.150;
const REFRACTORY_S: f64 = 0.200;
const T_WAVE_S: f64 = 0.360;
const LEARNING_S: f64 = 2.0;
/// Half-width of the neighbourhood searched for the R apex and the filtered peak.
const APEX_SEARCH_S: f64 = 0.1;

/// Intermediate streams, exposed for diagnostics and plotting.
#[derive(Debug, Clone)]
pub struct PanTompkinsStreams {
    pub filtered: Vec<f64>,
    pub derivative: Vec<f64>,
    pub integrated: Vec<f64>,
}

pub fn streams(ecg: &[f64], fs: f64) -> PanTompkinsStreams {
    let mean = crate::dsp::mean(ecg).unwrap_or(0.0);
    let centred: Vec<f64> = ecg.iter().map(|v| v - mean).collect();
    let sections = [Biquad::highpass(BAND_LO_HZ, fs), Biquad::lowpass(BAND_HI_HZ, fs)];
    let filtered = filtfilt(&sections, &centred, (fs as usize).max(12));
    let n = filtered.len();
    let derivative: Vec<f64> = (0..n)
        .map(|i| {
            let at = |k: isize| filtered[(i as isize + k).clamp(0, n as isize - 1) as usize];
            (2.0 * at(1) + at(2) - at(-2) - 2.0 * at(-1)) * fs / 8.0
        })
        .collect();
    let squared: Vec<f64> = derivative.iter().map(|d| d * d).collect();
    let integrated = moving_average(&squared, (INTEGRATION_S * fs).round() as usize);
    PanTompkinsStreams {
        filtered,
        derivative,
        integrated,
    }
}

#[derive(Debug, Clone, Copy)]
struct LevelPair {
    signal: f64,
    noise: f64,
}

impl LevelPair {
    fn threshold(&self) -> f64 {
        self.noise + 0.25 * (self.signal - self.noise)
    }

    fn signal_peak(&mut self, p: f64) {
        self.signal = 0.125 * p + 0.875 * self.signal;
    }

    fn noise_peak(&mut self, p: f64) {
        self.noise = 0.125 * p + 0.875 * self.noise;
    }
}

fn range_max(x: &[f64], centre: usize, half: usize, abs: bool) -> (usize, f64) {
    let lo = centre.saturating_sub(half);
    let hi = (centre + half).min(x.len() - 1);
    let mut best = (lo, f64::NEG_INFINITY);
    for (i, &v) in x.iter().enumerate().take(hi + 1).skip(lo) {
        let v = if abs { v.abs() } else { v };
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn detect_pan_tompkins(ecg: &[f64], fs: f64) -> Result<Vec<usize>, DetectorError> {
    let needed = (LEARNING_S * fs).ceil() as usize;
    if !(fs > 0.0) || ecg.len() < needed {
        return Err(DetectorError::SignalTooShort {
            len: ecg.len(),
            needed,
        });
    }
    if !(100.0..=1000.0).contains(&fs) {
        log::warn!("Pan-Tompkins tuned for 100-1000 Hz, got {fs} Hz");
    }
    let s = streams(ecg, fs);
    let peak_i = s.integrated.iter().copied().fold(0.0, f64::max);
    if peak_i <= 0.0 {
        return Ok(Vec::new());
    }

    let learn = &s.integrated[..needed];
    let learn_f: Vec<f64> = s.filtered[..needed].iter().map(|v| v.abs()).collect();
    let mean_of = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let max_of = |x: &[f64]| x.iter().copied().fold(0.0, f64::max);
    let mut integ = LevelPair {
        signal: max_of(learn) / 3.0,
        noise: mean_of(learn) / 2.0,
    };
    let mut filt = LevelPair {
        signal: max_of(&learn_f) / 3.0,
        noise: mean_of(&learn_f) / 2.0,
    };

    let refractory = (REFRACTORY_S * fs).round() as usize;
    let t_wave = (T_WAVE_S * fs).round() as usize;
    let half = (APEX_SEARCH_S * fs).round() as usize;
    let candidates = find_peaks_min_distance(&s.integrated, refractory as f64);

    let mut qrs: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    for k in candidates {
        let pi = s.integrated[k];
        let (_, pf) = range_max(&s.filtered, k, half, true);
        if let Some(&last) = qrs.last() {
            if k - last < refractory {
                continue;
            }
        }
        if pi > integ.threshold() && pf > filt.threshold() {
            let (_, slope) = range_max(&s.derivative, k, half, true);
            let is_t_wave = qrs
                .last()
                .is_some_and(|&last| k - last < t_wave && slope < 0.5 * last_slope);
            if is_t_wave {
                integ.noise_peak(pi);
                filt.noise_peak(pf);
            } else {
                integ.signal_peak(pi);
                filt.signal_peak(pf);
                last_slope = slope;
                qrs.push(k);
            }
        } else {
            integ.noise_peak(pi);
            filt.noise_peak(pf);
        }
    }

    let mut out: Vec<usize> = Vec::with_capacity(qrs.len());
    for k in qrs {
        let apex = r_apex(ecg, k, half);
        if out.last().is_none_or(|&l| apex > l) {
            out.push(apex);
        }
    }
    Ok(out)
}

/// Largest deviation from the local mean within `centre ± half`.
fn r_apex(x: &[f64], centre: usize, half: usize) -> usize {
    let lo = centre.saturating_sub(half);
    let hi = (centre + half + 1).min(x.len());
    let seg = &x[lo..hi];
    let local = seg.iter().sum::<f64>() / seg.len() as f64;
    let mut best = 0;
    for (i, v) in seg.iter().enumerate() {
        if (v - local).abs() > (seg[best] - local).abs() {
            best = i;
        }
    }
    lo + best
}
