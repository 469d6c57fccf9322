//! Constant mechanical delay between ECG beats and pulsatile-channel beats.

use serde::{Deserialize, Serialize};

use crate::detectors::DetectionSet;
use crate::dsp;

pub const DEFAULT_DELAY_MS: f64 = 200.0;
pub const MAX_DELAY_MS: f64 = 500.0;
/// Pairs needed before a measured delay is trusted.
pub const MIN_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DelaySource {
    Measured,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDelay {
    pub channel_index: usize,
    pub delay_samples: usize,
    pub source: DelaySource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub default_ms: f64,
    pub max_ms: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self {
            default_ms: DEFAULT_DELAY_MS,
            max_ms: MAX_DELAY_MS,
        }
    }
}

fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round().max(0.0) as usize
}

/// Forward lags from each reference beat to the first channel beat at or after it,
/// keeping those within `max_lag` samples.
pub fn forward_lags(reference: &[usize], chan: &[usize], max_lag: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut j = 0;
    for &r in reference {
        while j < chan.len() && chan[j] < r {
            j += 1;
        }
        match chan.get(j) {
            Some(&c) if c - r <= max_lag => lags.push(c - r),
            Some(_) => {}
            None => break,
        }
    }
    lags
}

/// Median forward lag, or `None` with fewer than [`MIN_PAIRS`] pairs.
pub fn measure_lag(reference: &[usize], chan: &[usize], fs: f64, params: &DelayParams) -> Option<usize> {
    let lags: Vec<f64> = forward_lags(reference, chan, ms_to_samples(params.max_ms, fs))
        .into_iter()
        .map(|l| l as f64)
        .collect();
    if lags.len() < MIN_PAIRS {
        return None;
    }
    dsp::median(&lags).map(|m| m.round() as usize)
}

pub fn estimate_delay(
    ecg_beats: &[usize],
    chan: &DetectionSet,
    params: &DelayParams,
) -> ChannelDelay {
    match measure_lag(ecg_beats, &chan.beats, chan.fs, params) {
        Some(d) => ChannelDelay {
            channel_index: chan.channel_index,
            delay_samples: d,
            source: DelaySource::Measured,
        },
        None => default_delay(chan.channel_index, chan.fs, params),
    }
}

pub fn default_delay(channel_index: usize, fs: f64, params: &DelayParams) -> ChannelDelay {
    ChannelDelay {
        channel_index,
        delay_samples: ms_to_samples(params.default_ms, fs),
        source: DelaySource::Default,
    }
}

/// Shifts every beat earlier by the delay, dropping those that would fall before 0.
pub fn apply_delay(beats: &[usize], delay: &ChannelDelay) -> Vec<usize> {
    beats
        .iter()
        .filter_map(|b| b.checked_sub(delay.delay_samples))
        .collect()
}

/// Delays for every detection set. ECG sets are not shifted. Pulsatile sets are measured
/// against `ecg_ref`; where that fails they are measured against the delay-corrected
/// `onset_ref` set (itself corrected first), and otherwise fall back to the default.
pub fn estimate_all(
    sets: &[DetectionSet],
    ecg_channel: usize,
    ecg_ref: &[usize],
    onset_ref: Option<&DetectionSet>,
    params: &DelayParams,
) -> Vec<ChannelDelay> {
    let onset = onset_ref.map(|s| {
        let d = estimate_delay(ecg_ref, s, params);
        (s.key(), d, apply_delay(&s.beats, &d))
    });
    sets.iter()
        .map(|s| {
            if s.channel_index == ecg_channel {
                return ChannelDelay {
                    channel_index: ecg_channel,
                    delay_samples: 0,
                    source: DelaySource::Measured,
                };
            }
            if let Some((key, d, _)) = &onset {
                if *key == s.key() {
                    return *d;
                }
            }
            let direct = estimate_delay(ecg_ref, s, params);
            if direct.source == DelaySource::Measured {
                return direct;
            }
            match &onset {
                Some((_, _, corrected)) => match measure_lag(corrected, &s.beats, s.fs, params) {
                    Some(d) => ChannelDelay {
                        channel_index: s.channel_index,
                        delay_samples: d,
                        source: DelaySource::Measured,
                    },
                    None => direct,
                },
                None => direct,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::DetectorId;

    fn set(beats: Vec<usize>) -> DetectionSet {
        DetectionSet::new(1, DetectorId::WindowAbsmax, 250.0, beats)
    }

    #[test]
    fn constant_lag() {
        let ecg: Vec<usize> = (0..20).map(|i| 100 + 250 * i).collect();
        let chan = set(ecg.iter().map(|b| b + 50).collect());
        let d = estimate_delay(&ecg, &chan, &DelayParams::default());
        assert_eq!(d.delay_samples, 50);
        assert_eq!(d.source, DelaySource::Measured);
    }

    #[test]
    fn too_few_pairs_defaults() {
        let ecg: Vec<usize> = (0..5).map(|i| 100 + 250 * i).collect();
        let chan = set(ecg.iter().map(|b| b + 30).collect());
        let d = estimate_delay(&ecg, &chan, &DelayParams::default());
        assert_eq!(d.delay_samples, 50);
        assert_eq!(d.source, DelaySource::Default);
    }

    #[test]
    fn jittered_median() {
        let jitter = [-2i64, 0, 2, -1, 1, 0, 2, -2, 1, -1, 0];
        let ecg: Vec<usize> = (0..11).map(|i| 100 + 250 * i).collect();
        let chan = set(
            ecg.iter()
                .zip(jitter)
                .map(|(&b, j)| (b as i64 + 50 + j) as usize)
                .collect(),
        );
        assert_eq!(estimate_delay(&ecg, &chan, &DelayParams::default()).delay_samples, 50);
    }

    #[test]
    fn apply_shifts_and_drops() {
        let d = ChannelDelay {
            channel_index: 1,
            delay_samples: 50,
            source: DelaySource::Measured,
        };
        assert_eq!(apply_delay(&[100, 350], &d), vec![50, 300]);
        assert!(apply_delay(&[30], &d).is_empty());
    }

    #[test]
    fn lags_beyond_limit_ignored() {
        assert!(forward_lags(&[0, 1000], &[200, 1300], 125).is_empty());
        assert_eq!(forward_lags(&[0, 1000], &[100, 1100], 125), vec![100, 100]);
    }
}
