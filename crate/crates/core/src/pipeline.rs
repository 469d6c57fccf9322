//! End-to-end processing of one record and the configuration that drives it.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::{self, ChannelDelay, DelayParams};
use crate::detectors::{self, general, DetectionSet, DetectorId, PreparedChannels, SetKey};
use crate::dsp::{self, DspError};
use crate::evaluation::Matching;
use crate::fusion::{self, CorrectedSet, FusionParams, PhysioBands, WindowFusion};
use crate::preprocess::{self, ECG_WAVELET_DEPTH};
use crate::quality::{self, PressureReference, QaParams, QualityAssessment, WindowStatus};
use crate::searchback::{self, SearchbackEdit};
use crate::signal_io::{self, Annotation, Record, SignalIoError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("{key} is fixed at {fixed} in this build")]
    Fixed { key: String, fixed: String },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Input(#[from] SignalIoError),
    #[error("ECG preprocessing failed: {0}")]
    Preprocess(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub qa_tol_ms: f64,
    pub eval_tol_ms: f64,
    pub physio_full: (f64, f64),
    pub physio_partial: (f64, f64),
    pub default_delay_ms: f64,
    pub max_delay_ms: f64,
    pub refractory_s: f64,
    pub wavelet_depth: usize,
    pub paced_check: bool,
    pub optimal_matching: bool,
    pub min_length_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            qa_tol_ms: quality::QA_TOL_MS,
            eval_tol_ms: crate::evaluation::DEFAULT_TOL_MS,
            physio_full: PhysioBands::default().full,
            physio_partial: PhysioBands::default().partial,
            default_delay_ms: alignment::DEFAULT_DELAY_MS,
            max_delay_ms: alignment::MAX_DELAY_MS,
            refractory_s: general::REFRACTORY_S,
            wavelet_depth: ECG_WAVELET_DEPTH,
            paced_check: true,
            optimal_matching: false,
            min_length_s: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    let bad = || ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    };
    let (a, b) = value.split_once(',').ok_or_else(bad)?;
    let pair: (f64, f64) = (parse(key, a)?, parse(key, b)?);
    if pair.0 <= pair.1 {
        Ok(pair)
    } else {
        Err(bad())
    }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        })
    }
}

impl PipelineConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "window_s" => self.window_s = positive(key, value)?,
            "qa_tol_ms" => self.qa_tol_ms = positive(key, value)?,
            "eval_tol_ms" => self.eval_tol_ms = positive(key, value)?,
            "physio_full" => self.physio_full = parse_pair(key, value)?,
            "physio_partial" => self.physio_partial = parse_pair(key, value)?,
            "default_delay_ms" => self.default_delay_ms = parse::<f64>(key, value)?.max(0.0),
            "max_delay_ms" => self.max_delay_ms = positive(key, value)?,
            "refractory_s" => {
                if parse::<f64>(key, value)? != general::REFRACTORY_S {
                    return Err(ConfigError::Fixed {
                        key: key.into(),
                        fixed: general::REFRACTORY_S.to_string(),
                    });
                }
            }
            "wavelet_depth" => {
                if parse::<usize>(key, value)? != ECG_WAVELET_DEPTH {
                    return Err(ConfigError::Fixed {
                        key: key.into(),
                        fixed: ECG_WAVELET_DEPTH.to_string(),
                    });
                }
            }
            "paced_check" => self.paced_check = parse(key, value)?,
            "optimal_matching" => self.optimal_matching = parse(key, value)?,
            "min_length_s" => self.min_length_s = parse::<f64>(key, value)?.max(0.0),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Canonical `key = value` text, one field per line in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "window_s = {}", self.window_s);
        let _ = writeln!(s, "qa_tol_ms = {}", self.qa_tol_ms);
        let _ = writeln!(s, "eval_tol_ms = {}", self.eval_tol_ms);
        let _ = writeln!(s, "physio_full = {},{}", self.physio_full.0, self.physio_full.1);
        let _ = writeln!(s, "physio_partial = {},{}", self.physio_partial.0, self.physio_partial.1);
        let _ = writeln!(s, "default_delay_ms = {}", self.default_delay_ms);
        let _ = writeln!(s, "max_delay_ms = {}", self.max_delay_ms);
        let _ = writeln!(s, "refractory_s = {}", self.refractory_s);
        let _ = writeln!(s, "wavelet_depth = {}", self.wavelet_depth);
        let _ = writeln!(s, "paced_check = {}", self.paced_check);
        let _ = writeln!(s, "optimal_matching = {}", self.optimal_matching);
        let _ = writeln!(s, "min_length_s = {}", self.min_length_s);
        s
    }

    /// SHA-256 of the canonical text, lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn matching(&self) -> Matching {
        if self.optimal_matching {
            Matching::Optimal
        } else {
            Matching::Greedy
        }
    }

    fn qa(&self) -> QaParams {
        QaParams {
            window_s: self.window_s,
            tol_ms: self.qa_tol_ms,
            paced_check: self.paced_check,
        }
    }

    fn delays(&self) -> DelayParams {
        DelayParams {
            default_ms: self.default_delay_ms,
            max_ms: self.max_delay_ms,
        }
    }

    fn fusion(&self) -> FusionParams {
        FusionParams {
            tol_ms: self.qa_tol_ms,
            bands: PhysioBands {
                full: self.physio_full,
                partial: self.physio_partial,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SetDelay {
    pub channel_index: usize,
    pub detector: DetectorId,
    pub delay: ChannelDelay,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutcome {
    pub annotation: Annotation,
    /// Beats before search-back.
    pub assembled: Vec<usize>,
    pub sets: Vec<DetectionSet>,
    pub delays: Vec<SetDelay>,
    pub quality: QualityAssessment,
    pub fusion: Vec<WindowFusion>,
    pub edits: Vec<SearchbackEdit>,
    pub config_hash: String,
}

impl PipelineOutcome {
    pub fn window_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for w in &self.quality.windows {
            c[match w.status {
                WindowStatus::AcceptEcg => 0,
                WindowStatus::FuseAll => 1,
                WindowStatus::FuseNoEcg => 2,
            }] += 1;
        }
        c
    }
}

/// Baseline-removed pulsatile candidates; a channel too short to transform is dropped.
fn prepare(record: &Record, cands: &signal_io::Candidates) -> Result<PreparedChannels, PipelineError> {
    let fs = record.fs;
    let ecg_raw = record.channels[cands.ecg].samples.clone();
    let ecg = preprocess::denoise_ecg(&ecg_raw, fs)?;
    let mut pulsatile = Vec::new();
    for &ch in &cands.pulsatile {
        match preprocess::remove_baseline_pulsatile(&record.channels[ch].samples, fs) {
            Ok(x) => pulsatile.push((ch, x)),
            Err(e) => log::warn!("record {}: channel {ch} skipped: {e}", record.id),
        }
    }
    let proprietary_pressure = cands
        .proprietary_pressure
        .filter(|p| pulsatile.iter().any(|(c, _)| c == p));
    Ok(PreparedChannels {
        ecg_index: cands.ecg,
        ecg_raw,
        ecg_optimized: ecg.optimized,
        pulsatile,
        proprietary_pressure,
    })
}

fn scaled(x: &[f64]) -> Vec<f64> {
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let scale = dsp::percentile(&abs, 99.0).filter(|s| *s > 0.0).unwrap_or(1.0);
    x.iter().map(|v| v / scale).collect()
}

/// Search-back signal: each window carries the waveform that supplied its beats, moved
/// onto the beat time axis.
fn search_signal(
    prep: &PreparedChannels,
    quality: &QualityAssessment,
    fused: &[WindowFusion],
    delays: &[SetDelay],
    len: usize,
) -> Vec<f64> {
    let ecg = scaled(&prep.ecg_optimized);
    let pulsatile: Vec<(usize, Vec<f64>, usize)> = prep
        .pulsatile
        .iter()
        .map(|(ch, x)| {
            let d = delays
                .iter()
                .find(|d| d.channel_index == *ch && d.detector == DetectorId::WindowAbsmax)
                .map_or(0, |d| d.delay.delay_samples);
            (*ch, scaled(x), d)
        })
        .collect();
    let mut out = ecg.clone();
    for w in &quality.windows {
        let source = fused
            .iter()
            .find(|f| f.window_index == w.index)
            .and_then(|f| f.winner)
            .map(|k| k.0)
            .filter(|&c| c != prep.ecg_index);
        if let Some((_, x, d)) = source.and_then(|c| pulsatile.iter().find(|p| p.0 == c)) {
            for (i, v) in out.iter_mut().enumerate().take(w.end).skip(w.start) {
                *v = x.get(i + d).copied().unwrap_or(0.0);
            }
        }
    }
    out.truncate(len);
    out
}

pub fn run_record(record: &Record, config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let fs = record.fs;
    let cands = signal_io::select_candidates(record)?;
    let prep = prepare(record, &cands)?;
    let sets = detectors::run_all_detectors(record, &prep);

    let find = |key: SetKey| sets.iter().find(|s| s.key() == key);
    let ecg_ref: Vec<usize> = find((prep.ecg_index, DetectorId::PanTompkins))
        .map(|s| s.beats.clone())
        .unwrap_or_default();
    let onset_set = prep
        .proprietary_pressure
        .and_then(|p| find((p, DetectorId::SlopeSumOnset)));

    let raw_delays = alignment::estimate_all(&sets, prep.ecg_index, &ecg_ref, onset_set, &config.delays());
    let delays: Vec<SetDelay> = sets
        .iter()
        .zip(&raw_delays)
        .map(|(s, d)| SetDelay {
            channel_index: s.channel_index,
            detector: s.detector,
            delay: *d,
        })
        .collect();
    let corrected: Vec<CorrectedSet> = sets
        .iter()
        .zip(&raw_delays)
        .map(|(s, d)| CorrectedSet {
            key: s.key(),
            beats: alignment::apply_delay(&s.beats, d),
        })
        .collect();

    let press_ref = onset_set.and_then(|o| corrected.iter().find(|c| c.key == o.key()));
    let quality = quality::assess(
        &prep.ecg_raw,
        fs,
        prep.ecg_index,
        &ecg_ref,
        press_ref.map(|c| PressureReference {
            channel: c.key.0,
            beats: &c.beats,
        }),
        &config.qa(),
    );

    let fusion_params = config.fusion();
    let fused: Vec<WindowFusion> = quality
        .windows
        .iter()
        .filter(|w| w.status.is_fused())
        .map(|w| {
            fusion::select_window_beats(
                w,
                &corrected,
                prep.ecg_index,
                quality.global.removed_channel,
                fs,
                &fusion_params,
            )
        })
        .collect();
    let assembled = fusion::assemble_record_beats(&quality.windows, &fused, &ecg_ref);

    let x = search_signal(&prep, &quality, &fused, &delays, record.len());
    let window_len = ((config.window_s * fs).round() as usize).max(1);
    let (beats, edits) = searchback::search_back(&assembled, &x, fs, window_len);
    debug_assert!(beats.windows(2).all(|w| w[0] < w[1]));

    Ok(PipelineOutcome {
        annotation: Annotation::new(record.id.clone(), fs, beats),
        assembled,
        sets,
        delays,
        quality,
        fusion: fused,
        edits,
        config_hash: config.hash(),
    })
}

/// Raw-ECG Pan-Tompkins beats alone, the single-detector baseline.
pub fn ecg_only_beats(record: &Record) -> Result<Vec<usize>, PipelineError> {
    let cands = signal_io::select_candidates(record)?;
    Ok(detectors::detect_pan_tompkins(&record.channels[cands.ecg].samples, record.fs).unwrap_or_default())
}
