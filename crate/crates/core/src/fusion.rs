//! Per-window scoring of detection sets and assembly of the record annotation.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorId, SetKey};
use crate::dsp;
use crate::quality::{WindowStatus, WindowVerdict};

pub const COMPAT_TOL_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysioBands {
    pub full: (f64, f64),
    pub partial: (f64, f64),
}

impl Default for PhysioBands {
    fn default() -> Self {
        Self {
            full: (0.8, 1.9),
            partial: (0.5, 2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSlice {
    pub set_ref: SetKey,
    pub beats: Vec<usize>,
}

impl WindowSlice {
    /// Beats of `set` inside `[start, end)`.
    pub fn clip(set_ref: SetKey, set: &[usize], window: (usize, usize)) -> Self {
        let lo = set.partition_point(|&b| b < window.0);
        let hi = set.partition_point(|&b| b < window.1);
        Self {
            set_ref,
            beats: set[lo..hi].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub regularity: f64,
    pub physio: f64,
    pub compat: f64,
    pub total: f64,
}

fn lexical(a: &SetKey, b: &SetKey) -> Ordering {
    a.0.cmp(&b.0).then(a.1.as_str().cmp(b.1.as_str()))
}

/// Rank scores `n - k` for slices ordered by `cmp`, ties broken lexically.
fn rank_scores<F>(slices: &[WindowSlice], mut cmp: F) -> Vec<f64>
where
    F: FnMut(usize, usize) -> Ordering,
{
    let n = slices.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(a, b).then_with(|| lexical(&slices[a].set_ref, &slices[b].set_ref)));
    let mut scores = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        scores[i] = (n - k) as f64;
    }
    scores
}

fn rr_variance(beats: &[usize]) -> Option<f64> {
    if beats.len() < 2 {
        return None;
    }
    let rr: Vec<f64> = beats.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    dsp::variance(&rr).ok()
}

/// Smallest RR variance scores `n`; slices with fewer than two beats rank last.
pub fn score_regularity(slices: &[WindowSlice]) -> Vec<f64> {
    let var: Vec<Option<f64>> = slices.iter().map(|s| rr_variance(&s.beats)).collect();
    rank_scores(slices, |a, b| match (var[a], var[b]) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    })
}

pub fn score_physio(slices: &[WindowSlice], window_s: f64, bands: &PhysioBands) -> Vec<f64> {
    let n = slices.len() as f64;
    let within = |r: f64, band: (f64, f64)| r >= band.0 && r <= band.1;
    slices
        .iter()
        .map(|s| {
            let ratio = if window_s > 0.0 {
                s.beats.len() as f64 / window_s
            } else {
                0.0
            };
            if within(ratio, bands.full) {
                n
            } else if within(ratio, bands.partial) {
                2.0 * n / 3.0
            } else {
                n / 3.0
            }
        })
        .collect()
}

/// Per-slice sum over its beats of the number of beats in other slices within `tol_ms`.
pub fn compat_sums(slices: &[WindowSlice], fs: f64, tol_ms: f64) -> Vec<usize> {
    let tol = (tol_ms * fs / 1000.0).round() as usize;
    slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.beats
                .iter()
                .map(|&b| {
                    slices
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, o)| {
                            let lo = o.beats.partition_point(|&x| x + tol < b);
                            let hi = o.beats.partition_point(|&x| x <= b + tol);
                            hi - lo
                        })
                        .sum::<usize>()
                })
                .sum()
        })
        .collect()
}

pub fn score_compat(slices: &[WindowSlice], fs: f64, tol_ms: f64) -> Vec<f64> {
    let sums = compat_sums(slices, fs, tol_ms);
    rank_scores(slices, |a, b| sums[b].cmp(&sums[a]))
}

pub fn score_slices(
    slices: &[WindowSlice],
    window_s: f64,
    fs: f64,
    tol_ms: f64,
    bands: &PhysioBands,
) -> Vec<ScoreCard> {
    let r = score_regularity(slices);
    let p = score_physio(slices, window_s, bands);
    let c = score_compat(slices, fs, tol_ms);
    (0..slices.len())
        .map(|i| ScoreCard {
            regularity: r[i],
            physio: p[i],
            compat: c[i],
            total: r[i] + p[i] + c[i],
        })
        .collect()
}

/// Index of the best slice: highest total, then highest compat score, then lexical order.
pub fn winner(slices: &[WindowSlice], cards: &[ScoreCard]) -> Option<usize> {
    (0..slices.len()).min_by(|&a, &b| {
        cards[b]
            .total
            .total_cmp(&cards[a].total)
            .then(cards[b].compat.total_cmp(&cards[a].compat))
            .then_with(|| lexical(&slices[a].set_ref, &slices[b].set_ref))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFusion {
    pub window_index: usize,
    pub winner: Option<SetKey>,
    pub beats: Vec<usize>,
    /// (set, scores) for every eligible slice, in lexical set order.
    pub scores: Vec<(SetKey, ScoreCard)>,
    /// No eligible set: the window is left empty for search-back.
    pub no_eligible_sets: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub tol_ms: f64,
    pub bands: PhysioBands,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            tol_ms: COMPAT_TOL_MS,
            bands: PhysioBands::default(),
        }
    }
}

/// A delay-corrected detection set offered to fusion.
#[derive(Debug, Clone)]
pub struct CorrectedSet {
    pub key: SetKey,
    pub beats: Vec<usize>,
}

/// Scores eligible sets for one fused window and returns the winner's beats. ECG sets are
/// ineligible under `FuseNoEcg`; `excluded` removes a whole channel.
pub fn select_window_beats(
    verdict: &WindowVerdict,
    sets: &[CorrectedSet],
    ecg_channel: usize,
    excluded: Option<usize>,
    fs: f64,
    params: &FusionParams,
) -> WindowFusion {
    let window = (verdict.start, verdict.end);
    let mut slices: Vec<WindowSlice> = sets
        .iter()
        .filter(|s| Some(s.key.0) != excluded)
        .filter(|s| !(verdict.status == WindowStatus::FuseNoEcg && s.key.0 == ecg_channel))
        .map(|s| WindowSlice::clip(s.key, &s.beats, window))
        .collect();
    slices.sort_by(|a, b| lexical(&a.set_ref, &b.set_ref));
    if slices.is_empty() {
        return WindowFusion {
            window_index: verdict.index,
            winner: None,
            beats: Vec::new(),
            scores: Vec::new(),
            no_eligible_sets: true,
        };
    }
    let window_s = (verdict.end - verdict.start) as f64 / fs;
    let cards = score_slices(&slices, window_s, fs, params.tol_ms, &params.bands);
    let w = winner(&slices, &cards).expect("non-empty slices");
    WindowFusion {
        window_index: verdict.index,
        winner: Some(slices[w].set_ref),
        beats: slices[w].beats.clone(),
        scores: slices.iter().map(|s| s.set_ref).zip(cards).collect(),
        no_eligible_sets: false,
    }
}

/// ECG reference beats in accepted windows plus the winning beats of fused windows,
/// sorted with exact duplicates removed. Close pairs at seams are left for search-back.
pub fn assemble_record_beats(
    verdicts: &[WindowVerdict],
    fused: &[WindowFusion],
    ecg_ref: &[usize],
) -> Vec<usize> {
    let mut out = Vec::new();
    for v in verdicts {
        if v.status == WindowStatus::AcceptEcg {
            out.extend(WindowSlice::clip((0, DetectorId::PanTompkins), ecg_ref, (v.start, v.end)).beats);
        } else if let Some(f) = fused.iter().find(|f| f.window_index == v.index) {
            out.extend_from_slice(&f.beats);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `window_index,channel,detector,regularity,physio,compat,total,winner` rows.
pub fn scores_csv(fused: &[WindowFusion]) -> String {
    let mut out = String::from("window_index,channel,detector,regularity,physio,compat,total,winner\n");
    for f in fused {
        for (key, c) in &f.scores {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{}",
                f.window_index,
                key.0,
                key.1,
                c.regularity,
                c.physio,
                c.compat,
                c.total,
                u8::from(f.winner == Some(*key))
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(ch: usize, id: DetectorId, beats: Vec<usize>) -> WindowSlice {
        WindowSlice {
            set_ref: (ch, id),
            beats,
        }
    }

    #[test]
    fn regularity_ranks_by_variance() {
        let s = vec![
            slice(0, DetectorId::LocalMax, vec![0, 10, 20, 30]),         // var 0
            slice(1, DetectorId::LocalMax, vec![0, 8, 20, 28]),          // rr 8,12,8 -> var 3.56
            slice(2, DetectorId::LocalMax, vec![0, 5, 30, 35]),          // large
        ];
        assert_eq!(score_regularity(&s), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn short_slice_ranks_last() {
        let s = vec![
            slice(0, DetectorId::LocalMax, vec![5]),
            slice(1, DetectorId::LocalMax, vec![0, 5, 30, 35]),
            slice(2, DetectorId::LocalMax, vec![0, 10, 20]),
        ];
        assert_eq!(score_regularity(&s), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_slices_tie_lexically() {
        let b = vec![100, 350, 600];
        let s = vec![
            slice(1, DetectorId::WindowAbsmax, b.clone()),
            slice(0, DetectorId::PanTompkins, b.clone()),
            slice(1, DetectorId::AdaptiveThreshold, b),
        ];
        // lexical: (0,pan_tompkins) < (1,adaptive_threshold) < (1,window_absmax)
        assert_eq!(score_regularity(&s), vec![1.0, 3.0, 2.0]);
        assert_eq!(compat_sums(&s, 250.0, 100.0), vec![6, 6, 6]);
        assert_eq!(score_compat(&s, 250.0, 100.0), vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn physio_bands() {
        let n6: Vec<usize> = (0..6).collect();
        let n11: Vec<usize> = (0..11).collect();
        let s = vec![
            slice(0, DetectorId::LocalMax, n6),
            slice(1, DetectorId::LocalMax, n11),
            slice(2, DetectorId::LocalMax, vec![]),
        ];
        assert_eq!(score_physio(&s, 5.0, &PhysioBands::default()), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn disjoint_slice_ranks_last_in_compat() {
        let s = vec![
            slice(0, DetectorId::LocalMax, vec![2000, 2500]),
            slice(1, DetectorId::LocalMax, vec![100, 350]),
            slice(2, DetectorId::LocalMax, vec![105, 355]),
        ];
        assert_eq!(compat_sums(&s, 250.0, 100.0), vec![0, 2, 2]);
        assert_eq!(score_compat(&s, 250.0, 100.0)[0], 1.0);
        assert_eq!(score_compat(&[slice(0, DetectorId::LocalMax, vec![1, 2])], 250.0, 100.0), vec![1.0]);
    }

    fn verdict(status: WindowStatus) -> WindowVerdict {
        WindowVerdict {
            index: 0,
            start: 0,
            end: 1250,
            status,
            local: None,
            d2_variance: None,
        }
    }

    #[test]
    fn no_eligible_sets_gives_empty_window() {
        let sets = vec![CorrectedSet {
            key: (0, DetectorId::PanTompkins),
            beats: vec![100, 350],
        }];
        let f = select_window_beats(&verdict(WindowStatus::FuseNoEcg), &sets, 0, None, 250.0, &FusionParams::default());
        assert!(f.no_eligible_sets);
        assert!(f.beats.is_empty());
    }

    #[test]
    fn regular_pressure_beats_noisy_ecg() {
        let truth: Vec<usize> = (0..5).map(|i| 100 + 250 * i).collect();
        let sets = vec![
            CorrectedSet {
                key: (0, DetectorId::PanTompkins),
                beats: vec![40, 90, 300, 310, 700, 1000, 1020, 1100],
            },
            CorrectedSet {
                key: (0, DetectorId::WindowAbsmax),
                beats: vec![60, 500, 520, 900],
            },
            CorrectedSet {
                key: (1, DetectorId::SlopeSumOnset),
                beats: truth.clone(),
            },
            CorrectedSet {
                key: (1, DetectorId::LocalMax),
                beats: truth.iter().map(|b| b + 3).collect(),
            },
        ];
        let f = select_window_beats(&verdict(WindowStatus::FuseAll), &sets, 0, None, 250.0, &FusionParams::default());
        assert_eq!(f.winner.map(|k| k.0), Some(1));
        let got = f.beats;
        assert!(got == truth || got == truth.iter().map(|b| b + 3).collect::<Vec<_>>());
    }

    #[test]
    fn accept_windows_use_reference() {
        let v = vec![
            WindowVerdict {
                index: 0,
                start: 0,
                end: 1250,
                status: WindowStatus::AcceptEcg,
                local: None,
                d2_variance: None,
            },
            WindowVerdict {
                index: 1,
                start: 1250,
                end: 2500,
                status: WindowStatus::FuseAll,
                local: None,
                d2_variance: None,
            },
        ];
        let fused = vec![WindowFusion {
            window_index: 1,
            winner: None,
            beats: vec![],
            scores: vec![],
            no_eligible_sets: true,
        }];
        let ecg_ref = vec![100, 350, 1300, 2000];
        assert_eq!(assemble_record_beats(&v, &fused, &ecg_ref), vec![100, 350]);
    }
}
