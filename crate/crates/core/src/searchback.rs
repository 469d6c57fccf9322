//! RR-driven repair of the assembled annotation, aimed at window seams where the beat
//! source switches from one channel to another.

use serde::{Deserialize, Serialize};

use crate::detectors::general::{rr_sweep, RrEdit, RrState};
use crate::dsp;

/// Insertions whose local maximum is below this fraction of the surrounding beats'
/// median amplitude are skipped.
pub const MIN_INSERT_FRACTION: f64 = 0.1;
const AMPLITUDE_BEATS: usize = 10;
/// Half-width used to read a beat's amplitude off the search signal.
const AMPLITUDE_HALF_S: f64 = 0.05;
/// Edits this close to a window boundary are reported as seam edits.
const SEAM_REACH_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EditKind {
    RemovedFp,
    InsertedFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchbackEdit {
    pub kind: EditKind,
    pub at: usize,
    /// Index of the window holding the edit.
    pub window_seam: usize,
    pub at_seam: bool,
    /// 0 for the main sweep, 1 for the verification sweep.
    pub pass: u8,
}

fn amplitude(x: &[f64], at: usize, half: usize) -> f64 {
    let lo = at.saturating_sub(half);
    let hi = (at + half + 1).min(x.len());
    x.get(lo..hi)
        .map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::NEG_INFINITY)
}

fn sweep(beats: &[usize], x: &[f64], fs: f64) -> (Vec<usize>, Vec<RrEdit>) {
    let half = (AMPLITUDE_HALF_S * fs).round() as usize;
    let mut state = RrState::seeded(beats, fs);
    rr_sweep(beats, x, fs, &mut state, |ins, accepted| {
        let recent: Vec<f64> = accepted
            .iter()
            .rev()
            .take(AMPLITUDE_BEATS)
            .map(|&b| amplitude(x, b, half))
            .filter(|v| v.is_finite())
            .collect();
        match dsp::median(&recent) {
            Some(m) if m > 0.0 => x[ins] >= MIN_INSERT_FRACTION * m,
            _ => true,
        }
    })
}

/// One main sweep followed by one verification sweep. `x` is the search signal: for each
/// window, the waveform of the channel that supplied its beats, time-aligned with them.
pub fn search_back(beats: &[usize], x: &[f64], fs: f64, window_len: usize) -> (Vec<usize>, Vec<SearchbackEdit>) {
    if beats.len() < 2 {
        return (beats.to_vec(), Vec::new());
    }
    let window_len = window_len.max(1);
    let reach = (SEAM_REACH_S * fs).round() as usize;
    let mut edits = Vec::new();
    let mut current = beats.to_vec();
    for pass in 0..2u8 {
        let (next, raw) = sweep(&current, x, fs);
        for e in raw {
            let (kind, at) = match e {
                RrEdit::Removed(i) => (EditKind::RemovedFp, i),
                RrEdit::Inserted(i) => (EditKind::InsertedFn, i),
            };
            let offset = at % window_len;
            edits.push(SearchbackEdit {
                kind,
                at,
                window_seam: at / window_len,
                at_seam: offset <= reach || window_len - offset <= reach,
                pass,
            });
        }
        current = next;
    }
    (current, edits)
}
