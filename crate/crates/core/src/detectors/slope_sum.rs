//! Arterial pressure pulse onset detection with a slope sum function (SSF).
//!
//! The pressure is low-passed at 16 Hz, the positive first differences are summed over a
//! 128 ms sliding window, and a pulse is declared when the SSF crosses 60% of the mean of
//! the SSF pulse maxima seen in the last 10 s. The onset is the start of the SSF rise
//! that led to the crossing.

use super::DetectorError;
use crate::dsp::filter::{filtfilt, Biquad};

const LOWPASS_HZ: f64 = 16.0;
const SSF_WINDOW_S: f64 = 0.128;
const THRESHOLD_FRACTION: f64 = 0.6;
const HISTORY_S: f64 = 10.0;
const REFRACTORY_S: f64 = 0.3;
/// Time after a crossing searched for the SSF maximum.
const EYE_CLOSING_S: f64 = 0.25;
/// Startup threshold: three times the mean SSF over the first ten seconds.
const STARTUP_FACTOR: f64 = 3.0;
/// No-pulse interval after which the threshold is halved, in units of the recent mean
/// pulse interval (never below `MIN_STALL_S`).
const STALL_FACTOR: f64 = 1.5;
const MIN_STALL_S: f64 = 1.0;
const MIN_DECAY: f64 = 1.0 / 16.0;
const MIN_DURATION_S: f64 = 2.0;

pub fn slope_sum(p: &[f64], fs: f64) -> Vec<f64> {
    let smooth = filtfilt(&[Biquad::lowpass(LOWPASS_HZ, fs)], p, (fs as usize).max(12));
    let w = ((SSF_WINDOW_S * fs).round() as usize).max(1);
    let mut ssf = vec![0.0; smooth.len()];
    let mut acc = 0.0;
    let mut du = vec![0.0; smooth.len()];
    for i in 1..smooth.len() {
        du[i] = (smooth[i] - smooth[i - 1]).max(0.0);
        acc += du[i];
        if i >= w {
            acc -= du[i - w];
        }
        ssf[i] = acc.max(0.0);
    }
    ssf
}

pub fn detect_slope_sum_onset(p: &[f64], fs: f64) -> Result<Vec<usize>, DetectorError> {
    let needed = (MIN_DURATION_S * fs).ceil() as usize;
    if !(fs > 0.0) || p.len() < needed {
        return Err(DetectorError::SignalTooShort {
            len: p.len(),
            needed,
        });
    }
    let ssf = slope_sum(p, fs);
    let startup_len = ((HISTORY_S * fs) as usize).min(ssf.len());
    let startup_mean = ssf[..startup_len].iter().sum::<f64>() / startup_len as f64;
    let global_max = ssf.iter().copied().fold(0.0, f64::max);
    if global_max <= 0.0 {
        return Ok(Vec::new());
    }

    let eye = ((EYE_CLOSING_S * fs).round() as usize).max(1);
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let history = (HISTORY_S * fs) as usize;
    let min_stall = (MIN_STALL_S * fs) as usize;

    // (index of SSF maximum, value)
    let mut maxima: Vec<(usize, f64)> = Vec::new();
    let mut onsets: Vec<usize> = Vec::new();
    let mut decay = 1.0;
    let mut last_event = 0usize;
    let mut t = 1usize;
    while t < ssf.len() {
        maxima.retain(|&(i, _)| i + history >= t);
        let base = if maxima.is_empty() {
            STARTUP_FACTOR * startup_mean
        } else {
            THRESHOLD_FRACTION * maxima.iter().map(|m| m.1).sum::<f64>() / maxima.len() as f64
        };
        let threshold = base * decay;

        let stall = if onsets.len() >= 2 {
            let span = onsets[onsets.len() - 1] - onsets[onsets.len().saturating_sub(6)];
            let n = (onsets.len() - 1).min(5);
            ((STALL_FACTOR * span as f64 / n as f64) as usize).max(min_stall)
        } else {
            (STALL_FACTOR * fs) as usize
        };
        if t > last_event + stall {
            decay = (decay * 0.5).max(MIN_DECAY);
            last_event = t;
            continue;
        }

        let clear = onsets.last().is_none_or(|&o| t >= o + refractory);
        if clear && ssf[t] > threshold && ssf[t - 1] <= threshold {
            let hi = (t + eye).min(ssf.len());
            let (peak_idx, peak) = ssf[t..hi]
                .iter()
                .enumerate()
                .fold((t, ssf[t]), |best, (i, &v)| if v > best.1 { (t + i, v) } else { best });
            // walk back down the rising edge to where the SSF stops climbing
            let eps = 0.01 * peak;
            let floor = onsets.last().map_or(0, |&o| o + refractory / 2);
            let mut onset = t;
            while onset > floor.max(1) && ssf[onset] - ssf[onset - 1] > eps {
                onset -= 1;
            }
            if onsets.last().is_none_or(|&o| onset >= o + refractory) {
                onsets.push(onset);
                maxima.push((peak_idx, peak));
                decay = 1.0;
                last_event = t;
            }
            t = peak_idx.max(t) + 1;
            continue;
        }
        t += 1;
    }
    Ok(onsets)
}
