//! Beat-by-beat comparison against reference annotations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL_MS: f64 = 150.0;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no records to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Nearest unmatched detection, references visited in order.
    #[default]
    Greedy,
    /// Maximum-cardinality one-to-one matching.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// (reference index, detection index) positions into the input slices.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub se: f64,
    pub ppv: f64,
    pub acc: f64,
    pub f1: f64,
    /// No references and no detections: every statistic reported as 0.
    pub undefined: bool,
}

pub fn tol_samples(tol_ms: f64, fs: f64) -> usize {
    (tol_ms * fs / 1000.0).round().max(0.0) as usize
}

/// Greedy one-to-one pairing: each reference, in order, takes the nearest unmatched
/// detection within `tol` samples (ties to the earlier detection).
pub fn greedy_pairs(reference: &[usize], detected: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let mut used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    let mut lo = 0;
    for (i, &r) in reference.iter().enumerate() {
        while lo < detected.len() && detected[lo] + tol < r {
            lo += 1;
        }
        let mut best: Option<(usize, usize)> = None;
        let mut j = lo;
        while j < detected.len() && detected[j] <= r + tol {
            if !used[j] {
                let d = detected[j].abs_diff(r);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            j += 1;
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Maximum-cardinality pairing. With a common tolerance the compatibility graph is an
/// interval graph and the two-pointer sweep is optimal.
pub fn optimal_pairs(reference: &[usize], detected: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < reference.len() && j < detected.len() {
        let (r, d) = (reference[i], detected[j]);
        if r.abs_diff(d) <= tol {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if d < r {
            j += 1;
        } else {
            i += 1;
        }
    }
    pairs
}

pub fn match_beats(reference: &[usize], detected: &[usize], fs: f64, tol_ms: f64, mode: Matching) -> MatchResult {
    let tol = tol_samples(tol_ms, fs);
    let pairs = match mode {
        Matching::Greedy => greedy_pairs(reference, detected, tol),
        Matching::Optimal => optimal_pairs(reference, detected, tol),
    };
    let tp = pairs.len();
    MatchResult {
        tp,
        fp: detected.len() - tp,
        fn_: reference.len() - tp,
        pairs,
    }
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else {
        0.0
    }
}

pub fn statistics(tp: usize, fp: usize, fn_: usize) -> Stats {
    let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
    Stats {
        se: pct(tp, tp + fn_),
        ppv: pct(tp, tp + fp),
        acc: pct(tp, tp + fn_ + fp),
        f1: pct(2.0 * tp, 2.0 * tp + fn_ + fp),
        undefined: tp + fp + fn_ == 0.0,
    }
}

/// F1 from sensitivity and positive predictivity, both in percent.
pub fn f1_from_se_ppv(se: f64, ppv: f64) -> f64 {
    if se + ppv > 0.0 {
        2.0 * se * ppv / (se + ppv)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEval {
    pub record_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub se: f64,
    pub ppv: f64,
    pub acc: f64,
    pub f1: f64,
}

impl RecordEval {
    pub fn new(record_id: impl Into<String>, m: &MatchResult) -> Self {
        let s = statistics(m.tp, m.fp, m.fn_);
        Self {
            record_id: record_id.into(),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            se: s.se,
            ppv: s.ppv,
            acc: s.acc,
            f1: s.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_record: Vec<RecordEval>,
    pub se_avg: f64,
    pub ppv_avg: f64,
    pub acc_avg: f64,
    pub f1_avg: f64,
}

/// Unweighted mean over records; every record counts once whatever its length.
pub fn aggregate(per_record: Vec<RecordEval>) -> Result<EvalReport, EvalError> {
    if per_record.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = per_record.len() as f64;
    let avg = |f: fn(&RecordEval) -> f64| per_record.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        se_avg: avg(|r| r.se),
        ppv_avg: avg(|r| r.ppv),
        acc_avg: avg(|r| r.acc),
        f1_avg: avg(|r| r.f1),
        per_record,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let width = self
            .per_record
            .iter()
            .map(|r| r.record_id.len())
            .max()
            .unwrap_or(0)
            .max("average".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7} {:>7} {:>7}  {:>8} {:>8} {:>8} {:>8}",
            "record", "tp", "fp", "fn", "Se", "PPV", "Acc", "F1"
        );
        for r in &self.per_record {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7} {:>7} {:>7}  {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                r.record_id, r.tp, r.fp, r.fn_, r.se, r.ppv, r.acc, r.f1
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>7} {:>7} {:>7}  {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            "average", "", "", "", self.se_avg, self.ppv_avg, self.acc_avg, self.f1_avg
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn close_detections_match() {
        let m = match_beats(&[250, 500], &[255, 495], 250.0, 150.0, Matching::Greedy);
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));
    }

    #[test]
    fn extra_detection_is_fp() {
        let m = match_beats(&[250], &[250, 260], 250.0, 150.0, Matching::Greedy);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
    }

    #[test]
    fn outside_tolerance() {
        // 50 samples = 200 ms > 150 ms (37.5 -> 38 samples)
        let m = match_beats(&[250], &[300], 250.0, 150.0, Matching::Greedy);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }

    #[test]
    fn greedy_nearest_is_not_always_maximal() {
        // ref 100 grabs 130 (nearer than 62); ref 160 then has nothing within 37
        let g = match_beats(&[100, 160], &[62, 130], 250.0, 150.0, Matching::Greedy);
        let o = match_beats(&[100, 160], &[62, 130], 250.0, 150.0, Matching::Optimal);
        assert_eq!(g.tp, 1);
        assert_eq!(o.tp, 2);
    }

    #[test]
    fn stats_arithmetic() {
        let s = statistics(90, 10, 10);
        assert!((s.se - 90.0).abs() < 1e-9);
        assert!((s.ppv - 90.0).abs() < 1e-9);
        assert!((s.f1 - 90.0).abs() < 1e-9);
        assert!((s.acc - 81.818_181_818).abs() < 1e-6);
        let z = statistics(0, 5, 5);
        assert_eq!((z.se, z.ppv, z.acc, z.f1), (0.0, 0.0, 0.0, 0.0));
        assert!(statistics(0, 0, 0).undefined);
    }

    #[test]
    fn aggregate_is_unweighted() {
        let a = RecordEval::new("a", &match_beats(&[1, 2], &[1, 2], 250.0, 150.0, Matching::Greedy));
        let mut b = a.clone();
        b.record_id = "b".into();
        b.se = 0.0;
        let r = aggregate(vec![a, b]).unwrap();
        assert_eq!(r.se_avg, 50.0);
        assert_eq!(aggregate(vec![]), Err(EvalError::EmptyInput));
    }
}
