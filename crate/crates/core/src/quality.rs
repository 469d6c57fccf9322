//! Three-step quality assessment: record-level ECG/pressure compatibility, per-window
//! compatibility, and a wavelet-variance ECG quality test for incompatible windows.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dsp::{self, Wavelet};
use crate::evaluation::greedy_pairs;

pub const QA_TOL_MS: f64 = 100.0;
pub const GLOBAL_COMPAT_FRACTION: f64 = 0.5;
/// Plausible detection rate range, beats per second.
pub const RATE_RANGE: (f64, f64) = (0.5, 2.5);
/// d2 at 250 Hz.
pub const VARIANCE_BAND_AT_250: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaParams {
    pub window_s: f64,
    pub tol_ms: f64,
    pub paced_check: bool,
}

impl Default for QaParams {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            tol_ms: QA_TOL_MS,
            paced_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowStatus {
    AcceptEcg,
    FuseAll,
    FuseNoEcg,
}

impl WindowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowStatus::AcceptEcg => "ACCEPT_ECG",
            WindowStatus::FuseAll => "FUSE_ALL",
            WindowStatus::FuseNoEcg => "FUSE_NO_ECG",
        }
    }

    pub fn is_fused(self) -> bool {
        self != WindowStatus::AcceptEcg
    }
}

impl fmt::Display for WindowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LocalStatus {
    Compatible,
    Incompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalVerdict {
    pub compatible: bool,
    pub compat_fraction: f64,
    pub removed_channel: Option<usize>,
    pub ecg_paced_suspect: bool,
    /// No pressure reference was available; the verdict is compatible by default.
    pub no_pressure_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub status: WindowStatus,
    pub local: Option<LocalStatus>,
    pub d2_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceThresholds {
    pub clean_thr: f64,
    pub noisy_thr: f64,
    /// No compatible window existed; `clean_thr` is the lowest-quartile variance.
    pub clean_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarianceOutcome {
    Thresholds(VarianceThresholds),
    /// Every window was compatible: the variance test is not needed.
    AllAccept,
}

pub fn beats_compatible(a: usize, b: usize, fs: f64, tol_ms: f64) -> bool {
    a.abs_diff(b) as f64 <= (tol_ms * fs / 1000.0).round()
}

fn tol_samples(tol_ms: f64, fs: f64) -> usize {
    (tol_ms * fs / 1000.0).round() as usize
}

fn rate(beats: &[usize], duration_s: f64) -> f64 {
    if duration_s > 0.0 {
        beats.len() as f64 / duration_s
    } else {
        0.0
    }
}

fn in_rate_range(r: f64) -> bool {
    (RATE_RANGE.0..=RATE_RANGE.1).contains(&r)
}

/// Pacing-spike check on the finest wavelet band. Pacemaker spikes are far narrower than
/// a QRS complex, so in a paced ECG the d1 band holds isolated, regularly recurring
/// impulses that dominate the QRS band.
pub fn paced_spikes(ecg: &[f64], fs: f64) -> bool {
    let qrs_level = dsp::shifted_band(3, fs);
    let depth = dsp::max_feasible_level(ecg.len(), qrs_level);
    if depth < qrs_level || fs <= 0.0 {
        return false;
    }
    let Ok(decomp) = dsp::dwt(ecg, Wavelet::Db6, depth) else {
        return false;
    };
    let abs = |level: usize| -> Vec<f64> {
        decomp.detail(level).unwrap_or(&[]).iter().map(|v| v.abs()).collect()
    };
    let d1 = abs(1);
    let d3 = abs(qrs_level);
    let (Some(p1), Some(m1), Some(p3)) = (
        dsp::percentile(&d1, 99.9),
        dsp::median(&d1),
        dsp::percentile(&d3, 99.9),
    ) else {
        return false;
    };
    if p1 <= 0.0 || p1 < 20.0 * m1 || p1 < p3 {
        return false;
    }
    let cut = 0.5 * p1;
    let mut events = 0usize;
    let mut widths = 0usize;
    let mut run = 0usize;
    for &v in d1.iter().chain(std::iter::once(&0.0)) {
        if v > cut {
            run += 1;
        } else if run > 0 {
            events += 1;
            widths += run;
            run = 0;
        }
    }
    let duration = ecg.len() as f64 / fs;
    events > 0 && events as f64 / duration >= 0.5 && widths as f64 / events as f64 <= 3.0
}

/// Record-level compatibility between the ECG reference beats and the (delay-corrected)
/// pressure reference beats. When compatibility is 50% or less exactly one channel is
/// removed: the one with an implausible detection rate, ECG first; with both plausible,
/// the ECG when it shows pacing spikes and the pressure channel otherwise.
pub fn global_qa(
    ecg_ref: &[usize],
    press_ref: &[usize],
    ecg_channel: usize,
    press_channel: usize,
    ecg: &[f64],
    fs: f64,
    params: &QaParams,
) -> GlobalVerdict {
    let tol = tol_samples(params.tol_ms, fs);
    let compat_fraction = if ecg_ref.is_empty() {
        0.0
    } else {
        greedy_pairs(ecg_ref, press_ref, tol).len() as f64 / ecg_ref.len() as f64
    };
    let compatible = compat_fraction > GLOBAL_COMPAT_FRACTION;
    let mut verdict = GlobalVerdict {
        compatible,
        compat_fraction,
        removed_channel: None,
        ecg_paced_suspect: false,
        no_pressure_reference: false,
    };
    if compatible {
        return verdict;
    }
    let duration = ecg.len() as f64 / fs;
    let ecg_ok = in_rate_range(rate(ecg_ref, duration));
    let press_ok = in_rate_range(rate(press_ref, duration));
    verdict.removed_channel = Some(if !ecg_ok {
        ecg_channel
    } else if !press_ok {
        press_channel
    } else if params.paced_check && paced_spikes(ecg, fs) {
        verdict.ecg_paced_suspect = true;
        ecg_channel
    } else {
        press_channel
    });
    verdict
}

/// Matched flags for both beat lists under one global one-to-one pairing.
pub fn match_flags(ecg_ref: &[usize], press_ref: &[usize], fs: f64, tol_ms: f64) -> (Vec<bool>, Vec<bool>) {
    let mut e = vec![false; ecg_ref.len()];
    let mut p = vec![false; press_ref.len()];
    for (i, j) in greedy_pairs(ecg_ref, press_ref, tol_samples(tol_ms, fs)) {
        e[i] = true;
        p[j] = true;
    }
    (e, p)
}

/// A window is compatible when it holds at least one beat and every ECG and pressure
/// beat inside it has a partner. The partner itself may sit just across the boundary.
pub fn local_qa(
    ecg_ref: &[usize],
    ecg_matched: &[bool],
    press_ref: &[usize],
    press_matched: &[bool],
    window: (usize, usize),
) -> LocalStatus {
    let inside = |beats: &[usize], matched: &[bool]| {
        let lo = beats.partition_point(|&b| b < window.0);
        let hi = beats.partition_point(|&b| b < window.1);
        (hi - lo, matched[lo..hi].iter().all(|&m| m))
    };
    let (ne, ok_e) = inside(ecg_ref, ecg_matched);
    let (np, ok_p) = inside(press_ref, press_matched);
    if ne + np > 0 && ok_e && ok_p {
        LocalStatus::Compatible
    } else {
        LocalStatus::Incompatible
    }
}

/// Variance of the d2-equivalent DB6 detail band of one ECG window.
pub fn window_d2_variance(ecg: &[f64], window: (usize, usize), fs: f64) -> Option<f64> {
    let level = dsp::shifted_band(VARIANCE_BAND_AT_250, fs);
    let seg = ecg.get(window.0..window.1)?;
    if seg.len() < (1 << level) {
        return None;
    }
    let decomp = dsp::dwt(seg, Wavelet::Db6, level).ok()?;
    dsp::variance(decomp.detail(level)?).ok()
}

/// Thresholds from per-window variances and local verdicts. Windows without a variance
/// (too short to transform) are ignored.
pub fn variance_thresholds(variances: &[Option<f64>], local: &[LocalStatus]) -> VarianceOutcome {
    let pick = |want: LocalStatus| -> Vec<f64> {
        variances
            .iter()
            .zip(local)
            .filter(|(_, &l)| l == want)
            .filter_map(|(v, _)| *v)
            .collect()
    };
    let compatible = pick(LocalStatus::Compatible);
    let incompatible = pick(LocalStatus::Incompatible);
    if incompatible.is_empty() {
        return VarianceOutcome::AllAccept;
    }
    let mean = |x: &[f64]| dsp::mean(x).unwrap_or(0.0);
    let noisy_thr = mean(&incompatible) - dsp::std_dev(&incompatible);
    if compatible.is_empty() {
        let all: Vec<f64> = variances.iter().filter_map(|v| *v).collect();
        return VarianceOutcome::Thresholds(VarianceThresholds {
            clean_thr: dsp::percentile(&all, 25.0).unwrap_or(0.0),
            noisy_thr,
            clean_fallback: true,
        });
    }
    VarianceOutcome::Thresholds(VarianceThresholds {
        clean_thr: mean(&compatible) + dsp::std_dev(&compatible),
        noisy_thr,
        clean_fallback: false,
    })
}

/// Below the clean threshold the ECG is trusted, above the noisy threshold it is dropped,
/// and in between every channel is fused. Inverted thresholds leave no middle band; the
/// second value reports that case.
pub fn ecg_quality_verdict(v: f64, thr: &VarianceThresholds) -> (WindowStatus, bool) {
    let inverted = thr.noisy_thr < thr.clean_thr;
    let status = if v < thr.clean_thr {
        WindowStatus::AcceptEcg
    } else if inverted || v > thr.noisy_thr {
        WindowStatus::FuseNoEcg
    } else {
        WindowStatus::FuseAll
    };
    (status, inverted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAssessment {
    pub global: GlobalVerdict,
    pub windows: Vec<WindowVerdict>,
    pub thresholds: Option<VarianceThresholds>,
    pub inverted_thresholds: bool,
}

/// Pressure reference for the assessment: channel index and delay-corrected beats.
pub struct PressureReference<'a> {
    pub channel: usize,
    pub beats: &'a [usize],
}

/// Runs the full assessment. Without a pressure reference every window accepts the ECG.
/// A globally incompatible record is fused everywhere without the removed channel.
pub fn assess(
    ecg: &[f64],
    fs: f64,
    ecg_channel: usize,
    ecg_ref: &[usize],
    press: Option<PressureReference<'_>>,
    params: &QaParams,
) -> QualityAssessment {
    let wins = dsp::windows(ecg.len(), fs, params.window_s);
    let variances: Vec<Option<f64>> = wins.iter().map(|&w| window_d2_variance(ecg, w, fs)).collect();
    let verdicts = |status: &dyn Fn(usize) -> (WindowStatus, Option<LocalStatus>)| -> Vec<WindowVerdict> {
        wins.iter()
            .enumerate()
            .map(|(i, &(start, end))| {
                let (s, l) = status(i);
                WindowVerdict {
                    index: i,
                    start,
                    end,
                    status: s,
                    local: l,
                    d2_variance: variances[i],
                }
            })
            .collect()
    };

    let Some(press) = press else {
        return QualityAssessment {
            global: GlobalVerdict {
                compatible: true,
                compat_fraction: 1.0,
                removed_channel: None,
                ecg_paced_suspect: false,
                no_pressure_reference: true,
            },
            windows: verdicts(&|_| (WindowStatus::AcceptEcg, None)),
            thresholds: None,
            inverted_thresholds: false,
        };
    };

    let global = global_qa(ecg_ref, press.beats, ecg_channel, press.channel, ecg, fs, params);
    if !global.compatible {
        let status = if global.removed_channel == Some(ecg_channel) {
            WindowStatus::FuseNoEcg
        } else {
            WindowStatus::FuseAll
        };
        return QualityAssessment {
            global,
            windows: verdicts(&|_| (status, None)),
            thresholds: None,
            inverted_thresholds: false,
        };
    }

    let (em, pm) = match_flags(ecg_ref, press.beats, fs, params.tol_ms);
    let local: Vec<LocalStatus> = wins
        .iter()
        .map(|&w| local_qa(ecg_ref, &em, press.beats, &pm, w))
        .collect();
    let outcome = variance_thresholds(&variances, &local);
    let mut inverted_thresholds = false;
    let thresholds = match outcome {
        VarianceOutcome::Thresholds(t) => Some(t),
        VarianceOutcome::AllAccept => None,
    };
    let windows = verdicts(&|i| {
        let status = match (local[i], thresholds, variances[i]) {
            (LocalStatus::Compatible, _, _) | (_, None, _) => WindowStatus::AcceptEcg,
            (LocalStatus::Incompatible, Some(t), Some(v)) => ecg_quality_verdict(v, &t).0,
            (LocalStatus::Incompatible, Some(_), None) => WindowStatus::FuseAll,
        };
        (status, Some(local[i]))
    });
    if let Some(t) = thresholds {
        inverted_thresholds = t.noisy_thr < t.clean_thr;
        if inverted_thresholds {
            log::debug!("inverted variance thresholds: clean {} noisy {}", t.clean_thr, t.noisy_thr);
        }
    }
    QualityAssessment {
        global,
        windows,
        thresholds,
        inverted_thresholds,
    }
}

/// `window_index,start,end,status,d2_variance` rows.
pub fn windows_csv(windows: &[WindowVerdict]) -> String {
    let mut out = String::from("window_index,start,end,status,d2_variance\n");
    for w in windows {
        let v = w.d2_variance.map(|v| format!("{v:.9e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", w.index, w.start, w.end, w.status, v);
    }
    out
}
