//! Detectors that work on any pulsatile waveform, and the RR-interval FP/FN remover.

use std::collections::VecDeque;

use super::DetectorError;
use crate::dsp;

/// Window length of the absolute-maximum detector, seconds.
pub const ABSMAX_WINDOW_S: f64 = 0.8;
/// Multiplier on `mean(|x|)` for the adaptive-threshold detector.
pub const ADAPTIVE_THRESHOLD_FACTOR: f64 = 4.0;
/// Local-maximum detector minimum distance, as a fraction of the mean seed RR.
pub const LOCAL_MAX_DISTANCE_FACTOR: f64 = 0.8;
/// Fallback local-maximum minimum distance in seconds.
pub const LOCAL_MAX_FALLBACK_S: f64 = 0.4;
/// Shortest plausible beat-to-beat distance, seconds.
pub const REFRACTORY_S: f64 = 0.2;
pub const MIN_RR_FACTOR: f64 = 0.5;
pub const MAX_RR_FACTOR: f64 = 1.3;
const RR_HISTORY: usize = 10;
const REMOVER_MAX_PASSES: usize = 5;

/// Running mean of the last ten RR intervals (samples).
#[derive(Debug, Clone)]
pub struct RrState {
    last_rrs: VecDeque<f64>,
    mean_rr: f64,
}

impl RrState {
    /// Seeds the state from the median RR of the first eleven beats, or `fs` samples
    /// (60 bpm) when fewer than eleven exist. Beats within the 0.2 s refractory period of
    /// the previous kept beat are skipped first, so sub-peaks of one complex do not
    /// collapse the seed.
    pub fn seeded(beats: &[usize], fs: f64) -> Self {
        let refractory = (REFRACTORY_S * fs) as usize;
        let mut kept: Vec<usize> = Vec::with_capacity(RR_HISTORY + 1);
        for &b in beats {
            if kept.len() > RR_HISTORY {
                break;
            }
            if kept.last().is_none_or(|&k| b >= k + refractory) {
                kept.push(b);
            }
        }
        let mean_rr = if kept.len() > RR_HISTORY {
            let rrs: Vec<f64> = kept.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
            dsp::median(&rrs).unwrap_or(fs)
        } else {
            fs
        };
        Self {
            last_rrs: VecDeque::with_capacity(RR_HISTORY),
            mean_rr: mean_rr.max(1.0),
        }
    }

    pub fn mean_rr(&self) -> f64 {
        self.mean_rr
    }

    pub fn push(&mut self, rr: f64) {
        if self.last_rrs.len() == RR_HISTORY {
            self.last_rrs.pop_front();
        }
        self.last_rrs.push_back(rr);
        self.mean_rr = (self.last_rrs.iter().sum::<f64>() / self.last_rrs.len() as f64).max(1.0);
    }
}

/// Outcome of one RR check between consecutive beats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrEdit {
    Removed(usize),
    Inserted(usize),
}

/// Distance kept clear around existing beats when searching a gap for a missed beat.
pub fn gap_margin(mean_rr: f64, fs: f64) -> usize {
    (MIN_RR_FACTOR * mean_rr).max(REFRACTORY_S * fs).ceil() as usize
}

/// Index of the tallest strict local maximum of `x` inside `[lo, hi]`, ties to the earlier.
pub fn tallest_local_max(x: &[f64], lo: usize, hi: usize) -> Option<usize> {
    if x.len() < 3 {
        return None;
    }
    let lo = lo.max(1);
    let hi = hi.min(x.len() - 2);
    let mut best: Option<usize> = None;
    for i in lo..=hi {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] && best.is_none_or(|b| x[i] > x[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks which of two close beats to drop. `prev` is the last accepted beat before the
/// pair (if any), `next` the beat after the pair (used only without `prev`).
fn choose_drop(prev: Option<usize>, a: usize, b: usize, next: Option<usize>, mean_rr: f64) -> usize {
    match (prev, next) {
        (Some(p), _) => {
            let da = ((a - p) as f64 - mean_rr).abs();
            let db = ((b - p) as f64 - mean_rr).abs();
            if db < da {
                a
            } else {
                b
            }
        }
        (None, Some(n)) => {
            let da = ((n - a) as f64 - mean_rr).abs();
            let db = ((n - b) as f64 - mean_rr).abs();
            if da < db {
                b
            } else {
                a
            }
        }
        (None, None) => b,
    }
}

/// One left-to-right RR sweep. Pairs closer than `max(0.5 mean_rr, 0.2 s)` lose the beat
/// whose RR to the last accepted beat is further from `mean_rr`; gaps longer than
/// `1.3 mean_rr` receive the tallest local maximum of `x` found at least the gap margin
/// away from both neighbours. `accept_insert` may veto an insertion.
pub fn rr_sweep<F>(
    beats: &[usize],
    x: &[f64],
    fs: f64,
    state: &mut RrState,
    mut accept_insert: F,
) -> (Vec<usize>, Vec<RrEdit>)
where
    F: FnMut(usize, &[usize]) -> bool,
{
    let mut edits = Vec::new();
    let mut out: Vec<usize> = Vec::with_capacity(beats.len());
    let mut pending: VecDeque<usize> = beats.iter().copied().collect();
    let min_gap_abs = REFRACTORY_S * fs;
    let mut candidate = match pending.pop_front() {
        Some(b) => b,
        None => return (out, edits),
    };
    while let Some(next) = pending.pop_front() {
        let mean = state.mean_rr();
        let rr = (next - candidate) as f64;
        if rr < (MIN_RR_FACTOR * mean).max(min_gap_abs) {
            let drop = choose_drop(out.last().copied(), candidate, next, pending.front().copied(), mean);
            edits.push(RrEdit::Removed(drop));
            if drop == candidate {
                candidate = next;
            }
            continue;
        }
        if rr > MAX_RR_FACTOR * mean {
            let margin = gap_margin(mean, fs);
            if next > candidate + 2 * margin {
                if let Some(ins) = tallest_local_max(x, candidate + margin, next - margin) {
                    if accept_insert(ins, &out) {
                        edits.push(RrEdit::Inserted(ins));
                        pending.push_front(next);
                        state.push((ins - candidate) as f64);
                        out.push(candidate);
                        candidate = ins;
                        continue;
                    }
                }
            }
        }
        state.push(rr);
        out.push(candidate);
        candidate = next;
    }
    out.push(candidate);
    (out, edits)
}

/// RR-driven false-positive / false-negative correction, repeated until a pass makes no
/// edit (at most five passes).
pub fn fp_fn_remover(beats: &[usize], x: &[f64], fs: f64) -> Vec<usize> {
    if beats.len() < 2 {
        return beats.to_vec();
    }
    let mut current = beats.to_vec();
    for _ in 0..REMOVER_MAX_PASSES {
        let mut state = RrState::seeded(&current, fs);
        let (next, edits) = rr_sweep(&current, x, fs, &mut state, |_, _| true);
        current = next;
        if edits.is_empty() {
            break;
        }
    }
    current
}

/// Maximum absolute amplitude in each consecutive 0.8 s window, then FP/FN removal.
pub fn detect_window_absmax(x: &[f64], fs: f64) -> Result<Vec<usize>, DetectorError> {
    let width = (ABSMAX_WINDOW_S * fs).round() as usize;
    if width == 0 || x.len() < width {
        return Err(DetectorError::SignalTooShort {
            len: x.len(),
            needed: width.max(1),
        });
    }
    let raw: Vec<usize> = (0..x.len())
        .step_by(width)
        .map(|start| {
            let end = (start + width).min(x.len());
            let mut best = start;
            for i in start..end {
                if x[i].abs() > x[best].abs() {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(fp_fn_remover(&raw, x, fs))
}

pub fn adaptive_threshold(x: &[f64]) -> f64 {
    ADAPTIVE_THRESHOLD_FACTOR * dsp::mean(&x.iter().map(|v| v.abs()).collect::<Vec<_>>()).unwrap_or(0.0)
}

/// Apex of every contiguous run above `4 * mean(|x|)`, then FP/FN removal.
pub fn detect_adaptive_threshold(x: &[f64], fs: f64) -> Vec<usize> {
    let thr = adaptive_threshold(x);
    let mut raw = Vec::new();
    let mut run: Option<usize> = None;
    for (i, &v) in x.iter().enumerate() {
        if v > thr {
            match run {
                Some(best) if x[best] >= v => {}
                _ => run = Some(i),
            }
        } else if let Some(best) = run.take() {
            raw.push(best);
        }
    }
    raw.extend(run);
    fp_fn_remover(&raw, x, fs)
}

/// Minimum peak distance for the local-maximum detector, from the other two detectors' beats.
pub fn local_max_distance(seed_a: &[usize], seed_b: &[usize], fs: f64) -> f64 {
    let diffs: Vec<f64> = seed_a
        .windows(2)
        .chain(seed_b.windows(2))
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    match dsp::mean(&diffs) {
        Some(m) => LOCAL_MAX_DISTANCE_FACTOR * m,
        None => LOCAL_MAX_FALLBACK_S * fs,
    }
}

/// Local maxima accepted tallest-first, each suppressing neighbours closer than
/// `min_distance`. Plateaus count once, at their first sample; equal heights resolve to
/// the earlier index.
pub fn find_peaks_min_distance(x: &[f64], min_distance: f64) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if min_distance <= 1.0 || peaks.len() < 2 {
        return peaks;
    }
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(a.cmp(&b)));
    let mut keep = vec![false; peaks.len()];
    let mut removed = vec![false; peaks.len()];
    for &k in &order {
        if removed[k] {
            continue;
        }
        keep[k] = true;
        let p = peaks[k] as f64;
        let mut j = k;
        while j > 0 && p - (peaks[j - 1] as f64) < min_distance {
            j -= 1;
            removed[j] = true;
        }
        let mut j = k + 1;
        while j < peaks.len() && (peaks[j] as f64) - p < min_distance {
            removed[j] = true;
            j += 1;
        }
    }
    peaks
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

pub fn detect_local_max(x: &[f64], fs: f64, seed_a: &[usize], seed_b: &[usize]) -> Vec<usize> {
    find_peaks_min_distance(x, local_max_distance(seed_a, seed_b, fs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse_train(n: usize, period: usize, offset: usize, width: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let k = ((i as isize - offset as isize) as f64 / period as f64).round();
                let c = offset as f64 + k * period as f64;
                let t = (i as f64 - c) / width;
                (-t * t).exp()
            })
            .collect()
    }

    #[test]
    fn absmax_single_pulse() {
        let mut x = vec![0.0; 200];
        for i in 90..=110 {
            x[i] = 1.0 - (i as f64 - 100.0).abs() / 10.0;
        }
        assert_eq!(detect_window_absmax(&x, 250.0).unwrap(), vec![100]);
    }

    #[test]
    fn absmax_zero_signal_collapses() {
        // Ties resolve to each window start: 0, 200, 400. With under eleven beats the
        // mean RR is seeded at fs = 250 and RR 200 lies inside [125, 325], so the
        // remover leaves the train alone.
        let x = vec![0.0; 600];
        assert_eq!(detect_window_absmax(&x, 250.0).unwrap(), vec![0, 200, 400]);
        // fs 100: picks 0, 80, 160 against a seeded mean of 100; RR 80 is inside [50, 130].
        let x = vec![0.0; 240];
        assert_eq!(detect_window_absmax(&x, 100.0).unwrap(), vec![0, 80, 160]);
    }

    #[test]
    fn absmax_too_short() {
        assert!(detect_window_absmax(&[0.0; 100], 250.0).is_err());
    }

    #[test]
    fn threshold_arithmetic() {
        let x = [0.1, -0.1, 0.1, -0.1];
        assert!((adaptive_threshold(&x) - 0.4).abs() < 1e-12);
        assert!(detect_adaptive_threshold(&[2.0; 100], 250.0).is_empty());
    }

    #[test]
    fn threshold_pulse_train() {
        // Narrow unit pulses every 250 samples: mean|x| ~ 0.035, threshold ~ 0.14.
        let x = pulse_train(2500, 250, 125, 5.0);
        let thr = adaptive_threshold(&x);
        assert!(thr < 0.2 && thr > 0.1, "{thr}");
        let beats = detect_adaptive_threshold(&x, 250.0);
        let expected: Vec<usize> = (0..10).map(|k| 125 + 250 * k).collect();
        assert_eq!(beats, expected);
    }

    #[test]
    fn min_distance_from_seeds() {
        let seeds: Vec<usize> = (0..10).map(|k| 250 * k).collect();
        assert_eq!(local_max_distance(&seeds, &seeds, 250.0), 200.0);
        assert_eq!(local_max_distance(&[5], &[], 250.0), 100.0);
    }

    #[test]
    fn local_max_monotone_has_no_peak() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(find_peaks_min_distance(&x, 10.0).is_empty());
    }

    #[test]
    fn local_max_taller_wins() {
        let mut x = vec![0.0; 400];
        x[100] = 1.0;
        x[250] = 2.0;
        assert_eq!(find_peaks_min_distance(&x, 200.0), vec![250]);
        x[250] = 1.0;
        assert_eq!(find_peaks_min_distance(&x, 200.0), vec![100]);
        assert_eq!(find_peaks_min_distance(&x, 100.0), vec![100, 250]);
    }

    #[test]
    fn local_max_plateau_counts_once() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(find_peaks_min_distance(&x, 0.0), vec![1]);
    }

    fn regular(n: usize, rr: usize, start: usize) -> Vec<usize> {
        (0..n).map(|k| start + k * rr).collect()
    }

    #[test]
    fn remover_drops_extra_beat() {
        let truth = regular(20, 250, 100);
        let x = pulse_train(5300, 250, 100, 4.0);
        let mut with_extra = truth.clone();
        with_extra.insert(8, truth[7] + 50);
        assert_eq!(fp_fn_remover(&with_extra, &x, 250.0), truth);
    }

    #[test]
    fn remover_fills_gap() {
        let truth = regular(20, 250, 100);
        let x = pulse_train(5300, 250, 100, 4.0);
        let mut missing = truth.clone();
        missing.remove(12);
        assert_eq!(fp_fn_remover(&missing, &x, 250.0), truth);
    }

    #[test]
    fn remover_fixpoint() {
        let truth = regular(20, 250, 100);
        let x = pulse_train(5300, 250, 100, 4.0);
        assert_eq!(fp_fn_remover(&truth, &x, 250.0), truth);
        assert_eq!(fp_fn_remover(&[7], &x, 250.0), vec![7]);
    }

    #[test]
    fn remover_first_pair_uses_following_beat() {
        let x = vec![0.0; 3000];
        let beats = vec![100, 120, 350, 600, 850];
        assert_eq!(fp_fn_remover(&beats, &x, 250.0), vec![100, 350, 600, 850]);
    }
}
